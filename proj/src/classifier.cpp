#include "gandistill/classifier.hpp"

#include <cmath>
#include <random>

#include "gandistill/checkpoint.hpp"
#include "gandistill/optim.hpp"
#include "gandistill/random.hpp"

namespace gandistill {

using nn::Init;

ConvClassifier::ConvClassifier(int num_classes, int resolution, int width, std::uint64_t seed)
    : num_classes_(num_classes), resolution_(resolution), width_(width) {
  if (num_classes < 2) throw InvalidArgument("classifier needs at least 2 classes");
  if (resolution < 8 || resolution % 8 != 0)
    throw InvalidArgument("classifier resolution must be a multiple of 8");
  if (width < 1) throw InvalidArgument("classifier width must be >= 1");
  std::mt19937_64 rng(derive_seed(seed, {0xc1a5}));
  c1_ = nn::Conv2d<float>(3, width, 3, 1, 1, true, Init::kXavierUniform, rng);
  c2_ = nn::Conv2d<float>(width, 2 * width, 4, 2, 1, true, Init::kXavierUniform, rng);
  c3_ = nn::Conv2d<float>(2 * width, 4 * width, 4, 2, 1, true, Init::kXavierUniform, rng);
  c4_ = nn::Conv2d<float>(4 * width, 4 * width, 4, 2, 1, true, Init::kXavierUniform, rng);
  fc_ = nn::Linear<float>(4 * width, num_classes, true, Init::kXavierUniform, rng);
}

ParamList<float> ConvClassifier::params() {
  ParamList<float> out;
  c1_.params(out, "c.conv1");
  c2_.params(out, "c.conv2");
  c3_.params(out, "c.conv3");
  c4_.params(out, "c.conv4");
  fc_.params(out, "c.fc");
  return out;
}

Tensor<float> ConvClassifier::features(const Tensor<float>& x) {
  if (x.c() != 3 || x.h() != resolution_ || x.w() != resolution_)
    throw InvalidArgument("classifier expects (N,3," + std::to_string(resolution_) + "," +
                          std::to_string(resolution_) + ") images, got " + x.shape_string());
  a1_ = nn::relu(c1_.forward(x));
  a2_ = nn::relu(c2_.forward(a1_));
  a3_ = nn::relu(c3_.forward(a2_));
  a4_ = nn::relu(c4_.forward(a3_));
  Tensor<float> pooled = nn::sum_pool(a4_);
  const float inv = 1.0f / static_cast<float>(a4_.plane());
  for (auto& v : pooled.vec()) v *= inv;
  return pooled;
}

Tensor<float> ConvClassifier::forward(const Tensor<float>& images) {
  return fc_.forward(features(images));
}

Eigen::MatrixXd ConvClassifier::embed(const Tensor<float>& images) {
  const Tensor<float> f = features(images);
  Eigen::MatrixXd out(f.n(), f.c());
  for (int i = 0; i < f.n(); ++i)
    for (int j = 0; j < f.c(); ++j) out(i, j) = f.at(i, j);
  return out;
}

namespace {

Eigen::MatrixXd softmax_rows(const Tensor<float>& logits) {
  Eigen::MatrixXd p(logits.n(), logits.c());
  for (int i = 0; i < logits.n(); ++i) {
    double mx = logits.at(i, 0);
    for (int j = 1; j < logits.c(); ++j) mx = std::max(mx, static_cast<double>(logits.at(i, j)));
    double z = 0;
    for (int j = 0; j < logits.c(); ++j) z += (p(i, j) = std::exp(logits.at(i, j) - mx));
    p.row(i) /= z;
  }
  return p;
}

}  // namespace

Eigen::MatrixXd ConvClassifier::classify(const Tensor<float>& images) {
  return softmax_rows(forward(images));
}

double ConvClassifier::train_loss(const Tensor<float>& images, std::span<const int> labels) {
  if (static_cast<int>(labels.size()) != images.n())
    throw InvalidArgument("classifier: label count differs from batch size");
  const Tensor<float> logits = forward(images);
  const Eigen::MatrixXd p = softmax_rows(logits);
  const int n = images.n();
  double loss = 0;
  Tensor<float> g(n, num_classes_);
  for (int i = 0; i < n; ++i) {
    loss -= std::log(std::max(p(i, labels[i]), 1e-30));
    for (int j = 0; j < num_classes_; ++j)
      g.at(i, j) = static_cast<float>((p(i, j) - (j == labels[i] ? 1.0 : 0.0)) / n);
  }
  Tensor<float> gp = fc_.backward(g);
  const float inv = 1.0f / static_cast<float>(a4_.plane());
  for (auto& v : gp.vec()) v *= inv;
  Tensor<float> g4 = nn::relu_backward(a4_, nn::sum_pool_backward(gp, a4_.h(), a4_.w()));
  Tensor<float> g3 = nn::relu_backward(a3_, c4_.backward(g4));
  Tensor<float> g2 = nn::relu_backward(a2_, c3_.backward(g3));
  Tensor<float> g1 = nn::relu_backward(a1_, c2_.backward(g2));
  c1_.backward(g1);
  return loss / n;
}

ClassifierReport train_classifier(ConvClassifier& net, const DistillDataset& data,
                                  const ClassifierTrainConfig& cfg) {
  if (data.num_classes() != net.num_classes() || data.resolution() != net.resolution())
    throw InvalidArgument("classifier and dataset disagree on classes or resolution");
  if (!(cfg.holdout_fraction > 0 && cfg.holdout_fraction < 1))
    throw InvalidArgument("holdout_fraction must be in (0, 1)");
  std::vector<std::int64_t> train, held;
  for (int c = 0; c < data.num_classes(); ++c) {
    const auto idx = data.class_indices(c);
    const auto n_held = static_cast<std::size_t>(std::ceil(cfg.holdout_fraction * idx.size()));
    if (n_held >= idx.size()) throw DataError("class " + std::to_string(c) + " is too small to split");
    train.insert(train.end(), idx.begin(), idx.end() - n_held);
    held.insert(held.end(), idx.end() - n_held, idx.end());
  }

  auto params = net.params();
  Adam<float> opt(params, AdamConfig{0.9, 0.999, 1e-8});
  std::mt19937_64 rng(derive_seed(cfg.seed, {0xc1a55}));
  std::uniform_int_distribution<std::size_t> pick(0, train.size() - 1);
  std::vector<std::int64_t> batch(cfg.batch_size);
  Tensor<float> z, images;
  std::vector<int> labels;
  ClassifierReport report;
  double ema = 0;
  for (int step = 0; step < cfg.steps; ++step) {
    for (auto& b : batch) b = train[pick(rng)];
    data.gather(batch, z, labels, images);
    opt.zero_grad();
    const double loss = net.train_loss(images, labels);
    if (!std::isfinite(loss)) throw NumericalError("classifier training diverged");
    ema = step == 0 ? loss : 0.95 * ema + 0.05 * loss;
    const double lr = cfg.lr * (step < cfg.steps / 2 ? 1.0 : 0.2);
    opt.step(lr);
  }
  report.final_loss = ema;

  std::int64_t correct = 0;
  for (std::size_t start = 0; start < held.size(); start += 256) {
    const std::size_t end = std::min(held.size(), start + 256);
    data.gather(std::span<const std::int64_t>(held.data() + start, end - start), z, labels, images);
    const Eigen::MatrixXd p = net.classify(images);
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
      Eigen::Index arg;
      p.row(i).maxCoeff(&arg);
      correct += (arg == labels[i]);
    }
  }
  report.heldout_count = static_cast<std::int64_t>(held.size());
  report.heldout_accuracy = static_cast<double>(correct) / static_cast<double>(held.size());
  return report;
}

void save_classifier(const std::filesystem::path& path, ConvClassifier& net,
                     const ClassifierReport& report) {
  Container c;
  c.header = {{"kind", "classifier"},
              {"num_classes", net.num_classes()},
              {"resolution", net.resolution()},
              {"width", net.width()},
              {"heldout_accuracy", report.heldout_accuracy},
              {"heldout_count", report.heldout_count}};
  export_tensors(c, net.params());
  write_container(path, c);
}

std::unique_ptr<ConvClassifier> load_classifier(const std::filesystem::path& path,
                                                ClassifierReport* report) {
  const Container c = read_container(path);
  if (c.header.value("kind", "") != "classifier")
    throw CheckpointError(path.string() + " does not hold a classifier");
  auto net = std::make_unique<ConvClassifier>(c.header.at("num_classes").get<int>(),
                                              c.header.at("resolution").get<int>(),
                                              c.header.at("width").get<int>(), 0);
  import_tensors(c, net->params());
  if (report) {
    report->heldout_accuracy = c.header.value("heldout_accuracy", 0.0);
    report->heldout_count = c.header.value("heldout_count", std::int64_t{0});
  }
  return net;
}

}  // namespace gandistill
