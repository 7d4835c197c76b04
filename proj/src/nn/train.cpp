#include "petsr/nn/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include "petsr/error.hpp"
#include "petsr/nn/adam.hpp"

namespace petsr::nn {

void PatchSet::validate() const {
  require(inputs.c == static_cast<int>(channels.size()), ErrorKind::ShapeMismatch,
          "patch inputs do not match the channel list");
  require(targets.n == inputs.n && targets.c == 1 && targets.h == inputs.h &&
              targets.w == inputs.w,
          ErrorKind::ShapeMismatch, "patch targets do not match the inputs");
  require(meta.size() == static_cast<std::size_t>(inputs.n), ErrorKind::ShapeMismatch,
          "patch metadata count mismatch");
}

PatchSet PatchSet::concat(const std::vector<PatchSet>& parts) {
  PatchSet out;
  int n = 0;
  for (const auto& p : parts) {
    if (p.empty()) continue;
    p.validate();
    if (n == 0) {
      out.channels = p.channels;
      out.inputs = Tensor<float>(0, p.inputs.c, p.inputs.h, p.inputs.w);
      out.targets = Tensor<float>(0, 1, p.inputs.h, p.inputs.w);
    }
    require(p.channels == out.channels && p.inputs.h == out.inputs.h && p.inputs.w == out.inputs.w,
            ErrorKind::ShapeMismatch, "cannot concatenate patch sets of different layout");
    out.inputs.data.insert(out.inputs.data.end(), p.inputs.data.begin(), p.inputs.data.end());
    out.targets.data.insert(out.targets.data.end(), p.targets.data.begin(), p.targets.data.end());
    out.meta.insert(out.meta.end(), p.meta.begin(), p.meta.end());
    n += p.size();
  }
  out.inputs.n = n;
  out.targets.n = n;
  return out;
}

void TrainConfig::validate() const {
  require(epochs >= 0, ErrorKind::InvalidArgument, "epochs must be >= 0");
  require(batch_size >= 1, ErrorKind::InvalidArgument, "batch_size must be >= 1");
  require(learning_rate >= 0.0 && std::isfinite(learning_rate), ErrorKind::InvalidArgument,
          "learning_rate must be finite and >= 0");
}

std::string TrainHistory::to_csv() const {
  std::ostringstream os;
  os << "epoch,train_loss,val_loss\n";
  char buf[96];
  for (const auto& e : epochs) {
    if (std::isnan(e.val_loss))
      std::snprintf(buf, sizeof buf, "%d,%.9g,\n", e.epoch, e.train_loss);
    else
      std::snprintf(buf, sizeof buf, "%d,%.9g,%.9g\n", e.epoch, e.train_loss, e.val_loss);
    os << buf;
  }
  return os.str();
}

void TrainHistory::write_csv(const std::filesystem::path& path) const {
  std::ofstream out(path);
  require(bool(out), ErrorKind::Io, "cannot write " + path.string());
  out << to_csv();
}

namespace {

void gather(const PatchSet& set, const std::vector<int>& idx, std::size_t begin, std::size_t end,
            Tensor<float>& in, Tensor<float>& tgt) {
  const int n = static_cast<int>(end - begin);
  in = Tensor<float>(n, set.inputs.c, set.inputs.h, set.inputs.w);
  tgt = Tensor<float>(n, 1, set.inputs.h, set.inputs.w);
  const std::size_t si = set.inputs.sample_size(), st = set.targets.sample_size();
  for (int k = 0; k < n; ++k) {
    const int s = idx[begin + k];
    std::copy_n(set.inputs.sample(s), si, in.sample(k));
    std::copy_n(set.targets.sample(s), st, tgt.sample(k));
  }
}

}  // namespace

double evaluate_loss(const Network<float>& net, const PatchSet& set, int chunk) {
  set.validate();
  require(!set.empty(), ErrorKind::InvalidArgument, "evaluate_loss on an empty patch set");
  require(set.channels == net.spec().inputs, ErrorKind::ShapeMismatch,
          "patch channels do not match the network inputs");
  std::vector<int> idx(set.size());
  std::iota(idx.begin(), idx.end(), 0);
  double sum = 0.0;
  Tensor<float> in, tgt;
  for (std::size_t b = 0; b < idx.size(); b += chunk) {
    const std::size_t e = std::min(idx.size(), b + static_cast<std::size_t>(chunk));
    gather(set, idx, b, e, in, tgt);
    const Tensor<float> pred = net.forward(in);
    for (std::size_t i = 0; i < pred.size(); ++i)
      sum += std::abs(static_cast<double>(pred.data[i]) - static_cast<double>(tgt.data[i]));
  }
  return sum / static_cast<double>(set.targets.size());
}

TrainHistory train(Network<float>& net, const PatchSet& train_set, const TrainConfig& cfg,
                   const PatchSet* val_set, const EpochObserver& observer) {
  cfg.validate();
  train_set.validate();
  require(!train_set.empty(), ErrorKind::InvalidArgument, "training set is empty");
  require(train_set.channels == net.spec().inputs, ErrorKind::ShapeMismatch,
          "patch channels do not match the network inputs");
  const bool has_val = val_set != nullptr && !val_set->empty();
  const double nan = std::numeric_limits<double>::quiet_NaN();

  TrainHistory hist;
  auto log = [&](const EpochRecord& r) {
    hist.epochs.push_back(r);
    if (observer) observer(r);
  };
  log({0, evaluate_loss(net, train_set), has_val ? evaluate_loss(net, *val_set) : nan});

  std::mt19937_64 rng(cfg.seed);
  AdamState<float> adam(net.parameter_count(), cfg.learning_rate);
  std::vector<int> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<float> grad;
  Tensor<float> in, tgt;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    if (cfg.shuffle) std::shuffle(order.begin(), order.end(), rng);
    double weighted = 0.0;
    for (std::size_t b = 0; b < order.size(); b += cfg.batch_size) {
      const std::size_t e = std::min(order.size(), b + static_cast<std::size_t>(cfg.batch_size));
      gather(train_set, order, b, e, in, tgt);
      const float loss = net.loss_and_gradient(in, tgt, grad);
      require(std::isfinite(loss), ErrorKind::NonFinite,
              "training loss became non-finite at epoch " + std::to_string(epoch));
      weighted += static_cast<double>(loss) * static_cast<double>(e - b);
      adam_step(net.params(), grad, adam);
    }
    log({epoch, weighted / static_cast<double>(order.size()),
         has_val ? evaluate_loss(net, *val_set) : nan});
  }
  return hist;
}

}  // namespace petsr::nn
