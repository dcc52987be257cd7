#include <gtest/gtest.h>

#include <sstream>

#include "declare/checkpoint.hpp"
#include "declare/errors.hpp"
#include "declare/training.hpp"
#include "synthetic.hpp"

namespace {

namespace model = declare::model;
namespace training = declare::training;

model::Model trained_model(model::Precision precision, model::Head head = model::Head::binary) {
  const auto data = declare::testing::make_synthetic({.claims = 16});
  auto hyper = declare::testing::synthetic_hyper();
  hyper.head = head;
  hyper.claim_source_dim = 0;
  training::TrainConfig config;
  config.max_epochs = 2;
  config.precision = precision;
  training::DatasetOptions options;
  options.article_min_support = 2;
  if (head == model::Head::regression) {
    options.labels = declare::corpus::LabelScheme::regression();
  }
  return training::train_model(data.instances, {}, hyper, config, data.words, options).model;
}

model::Model round_trip(const model::Model& m) {
  std::stringstream buf;
  model::save_checkpoint(buf, m);
  return model::load_checkpoint(buf);
}

TEST(Checkpoint, DoubleRoundTripIsBitExact) {
  const auto m = trained_model(model::Precision::f64);
  EXPECT_EQ(round_trip(m), m);
}

TEST(Checkpoint, FloatRoundTripIsBitExact) {
  const auto m = trained_model(model::Precision::f32);
  const auto back = round_trip(m);
  EXPECT_EQ(back, m);
  EXPECT_EQ(back.precision, model::Precision::f32);
  // 32-bit parameters survive the widening without change.
  EXPECT_EQ(back.params.cast<float>().cast<double>(), back.params);
}

TEST(Checkpoint, RegressionRoundTrips) {
  auto m = trained_model(model::Precision::f64, model::Head::regression);
  EXPECT_EQ(round_trip(m), m);
}

TEST(Checkpoint, FileRoundTripAndPredictionsAgree) {
  const auto data = declare::testing::make_synthetic({.claims = 16});
  const auto m = trained_model(model::Precision::f64);
  const auto path = declare::testing::scratch_dir("checkpoint") / "m.ckpt";
  model::save_checkpoint(path, m);
  const auto back = model::load_checkpoint(path);
  for (const auto& claim : data.instances) {
    EXPECT_EQ(model::predict(m, claim, data.words).credibility,
              model::predict(back, claim, data.words).credibility);
  }
}

TEST(Checkpoint, BadMagicRejected) {
  std::stringstream buf("XXXX and then some bytes");
  EXPECT_THROW(model::load_checkpoint(buf), declare::ParseError);
}

TEST(Checkpoint, EveryTruncationRejected) {
  std::stringstream buf;
  model::save_checkpoint(buf, trained_model(model::Precision::f64));
  const std::string bytes = buf.str();
  for (std::size_t cut : {std::size_t{0}, std::size_t{3}, std::size_t{9}, bytes.size() / 2, bytes.size() - 1}) {
    std::stringstream part(bytes.substr(0, cut));
    EXPECT_THROW(model::load_checkpoint(part), declare::ParseError) << "cut at " << cut;
  }
}

TEST(Checkpoint, MissingFileIsIoError) {
  EXPECT_THROW(model::load_checkpoint(std::filesystem::path("/nonexistent/m.ckpt")), declare::IoError);
}

TEST(Checkpoint, ForeignVocabularyRejected) {
  const auto m = trained_model(model::Precision::f64);
  const auto other = declare::testing::make_synthetic({.claims = 4, .neutral_words = 41});
  EXPECT_THROW(model::predict(m, other.instances[0], other.words), declare::ContractError);
}

}  // namespace
