#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "pavepci/checkpoint.hpp"
#include "test_util.hpp"

namespace pavepci {
namespace {

namespace fs = std::filesystem;
using testing::random_tensor;

class CheckpointTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("pavepci_ckpt_" + std::to_string(::getpid()) + "_" +
            ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  fs::path dir_;
};

TrainingState sample_state() {
  TrainingState s;
  s.epoch = 7;
  s.best_epoch = 5;
  s.best_metric = 3.25;
  s.monitor = "val_rmse";
  s.epochs_without_improvement = 2;
  s.scheduler.lr = 1e-5;
  s.scheduler.best = 3.25;
  s.scheduler.bad_epochs = 1;
  s.scheduler.reductions = 1;
  s.optimizer.kind = "adam";
  s.optimizer.step = 42;
  s.optimizer.slots.push_back({"m/fc.bias", Tensor<float>(1, 1, 1, 1, 0.5f)});
  s.metadata["image_size"] = "64";
  return s;
}

TEST_F(CheckpointTest, RoundTripGivesIdenticalPredictions) {
  Model model = build_model(ArchitectureSpec::for_family(Family::resnet50_cbam), 3);
  // Move running statistics away from their defaults.
  model.set_training(true);
  model.forward(random_tensor<float>({2, 3, 32, 32}, 1));
  model.set_training(false);
  const auto x = random_tensor<float>({2, 3, 48, 48}, 9);
  const auto before = model.predict(x);

  const fs::path path = dir_ / "model.ckpt";
  save_checkpoint(model, sample_state(), path);
  LoadedCheckpoint loaded = load_checkpoint(path);
  EXPECT_EQ(loaded.model.spec(), model.spec());
  EXPECT_EQ(loaded.model.predict(x), before);

  const TrainingState& s = loaded.state;
  EXPECT_EQ(s.epoch, 7);
  EXPECT_EQ(s.best_epoch, 5);
  EXPECT_EQ(s.best_metric, 3.25);
  EXPECT_EQ(s.monitor, "val_rmse");
  EXPECT_EQ(s.epochs_without_improvement, 2);
  EXPECT_EQ(s.scheduler.lr, 1e-5);
  EXPECT_EQ(s.scheduler.reductions, 1);
  EXPECT_EQ(s.optimizer.kind, "adam");
  EXPECT_EQ(s.optimizer.step, 42);
  ASSERT_EQ(s.optimizer.slots.size(), 1u);
  EXPECT_EQ(s.optimizer.slots[0].name, "m/fc.bias");
  EXPECT_EQ(s.optimizer.slots[0].value[0], 0.5f);
  EXPECT_EQ(s.metadata.at("image_size"), "64");

  auto a = model.network().named_buffers();
  auto b = loaded.model.network().named_buffers();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].tensor->storage(), b[i].tensor->storage()) << a[i].name;
  }
}

TEST_F(CheckpointTest, InfiniteBestMetricSurvives) {
  Model model = build_model(ArchitectureSpec::for_family(Family::resnet50), 1);
  save_checkpoint(model, TrainingState{}, dir_ / "fresh.ckpt");
  EXPECT_TRUE(std::isinf(load_checkpoint(dir_ / "fresh.ckpt").state.best_metric));
}

TEST_F(CheckpointTest, FamilyMismatchIsRejected) {
  Model model = build_model(ArchitectureSpec::for_family(Family::resnet50), 1);
  const fs::path path = dir_ / "plain.ckpt";
  save_checkpoint(model, TrainingState{}, path);
  EXPECT_EQ(peek_checkpoint_spec(path).family, Family::resnet50);
  EXPECT_THROW(load_checkpoint(path, ArchitectureSpec::for_family(Family::resnet50_cbam)),
               SpecMismatchError);
  Model other = build_model(ArchitectureSpec::for_family(Family::resnet50_cbam), 1);
  EXPECT_THROW(load_weights(other, path), SpecMismatchError);
  EXPECT_NO_THROW(load_checkpoint(path, ArchitectureSpec::for_family(Family::resnet50)));

  auto spec = ArchitectureSpec::for_family(Family::resnet50);
  spec.reduction_ratio = 8;  // irrelevant to resnet50 but still part of the spec
  EXPECT_THROW(load_checkpoint(path, spec), SpecMismatchError);
}

TEST_F(CheckpointTest, CorruptFilesAreRejected) {
  Model model = build_model(ArchitectureSpec::for_family(Family::resnet50), 1);
  const fs::path path = dir_ / "good.ckpt";
  save_checkpoint(model, TrainingState{}, path);
  std::string bytes;
  {
    std::ifstream in(path, std::ios::binary);
    bytes.assign(std::istreambuf_iterator<char>(in), {});
  }
  auto write = [&](const fs::path& p, const std::string& content) {
    std::ofstream out(p, std::ios::binary);
    out << content;
  };

  std::string flipped = bytes;
  flipped[bytes.size() / 2] ^= 0x40;
  write(dir_ / "flipped.ckpt", flipped);
  EXPECT_THROW(load_checkpoint(dir_ / "flipped.ckpt"), LoadError);

  write(dir_ / "short.ckpt", bytes.substr(0, bytes.size() / 3));
  EXPECT_THROW(load_checkpoint(dir_ / "short.ckpt"), LoadError);

  std::string magic = bytes;
  magic[0] = 'X';
  write(dir_ / "magic.ckpt", magic);
  EXPECT_THROW(load_checkpoint(dir_ / "magic.ckpt"), LoadError);

  write(dir_ / "empty.ckpt", "");
  EXPECT_THROW(load_checkpoint(dir_ / "empty.ckpt"), LoadError);
  EXPECT_THROW(load_checkpoint(dir_ / "missing.ckpt"), LoadError);
}

TEST_F(CheckpointTest, BackboneLoadMapsByName) {
  Model source = build_model(ArchitectureSpec::for_family(Family::resnet50), 101);
  const fs::path path = dir_ / "backbone.ckpt";
  save_checkpoint(source, TrainingState{}, path);

  Model target = build_model(ArchitectureSpec::for_family(Family::resnet50_cbam), 202);
  std::map<std::string, std::vector<float>> cbam_before;
  for (auto& np : target.network().named_parameters()) {
    if (np.name.find(".cbam.") != std::string::npos) {
      cbam_before[np.name] = np.param->value.storage();
    }
  }
  const BackboneLoadReport report = load_backbone(target, path);

  const std::size_t source_tensors =
      source.network().named_parameters().size() + source.network().named_buffers().size();
  EXPECT_EQ(report.unmatched.size(), 0u);
  EXPECT_EQ(report.fresh.size(), 16u * 4);
  EXPECT_EQ(cbam_before.size(), 16u * 4);
  for (const std::string& name : report.fresh) EXPECT_TRUE(cbam_before.count(name)) << name;
  // fc.weight and fc.bias on both sides.
  EXPECT_EQ(report.head.size(), 4u);
  EXPECT_EQ(report.matched.size(), source_tensors - 2);

  std::map<std::string, const Tensor<float>*> src;
  for (auto& np : source.network().named_parameters()) src[np.name] = &np.param->value;
  for (auto& np : target.network().named_parameters()) {
    if (cbam_before.count(np.name)) {
      EXPECT_EQ(np.param->value.storage(), cbam_before[np.name]) << np.name;
    } else if (np.name.rfind("fc.", 0) != 0) {
      EXPECT_EQ(np.param->value.storage(), src.at(np.name)->storage()) << np.name;
    }
  }
}

TEST(SpecJson, RoundTrip) {
  auto spec = ArchitectureSpec::for_family(Family::densenet161);
  spec.pretrained_backbone = true;
  EXPECT_EQ(spec_from_json(spec_to_json(spec)), spec);
  EXPECT_THROW(spec_from_json("{\"family\":\"resnet50\"}"), LoadError);
  EXPECT_THROW(spec_from_json("not json"), LoadError);
}

}  // namespace
}  // namespace pavepci
