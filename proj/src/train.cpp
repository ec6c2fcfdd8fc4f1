#include "uasabi/error.hpp"
#include "uasabi/inference.hpp"

#include <chrono>
#include <cmath>
#include <numeric>

namespace uasabi {
namespace {

void mean_sd(const Eigen::MatrixXd& rows, Eigen::VectorXd& mean, Eigen::VectorXd& sd) {
  const Eigen::Index n = rows.rows();
  mean = rows.colwise().mean().transpose();
  sd.resize(rows.cols());
  for (Eigen::Index c = 0; c < rows.cols(); ++c) {
    const double v = n > 1 ? (rows.col(c).array() - mean(c)).square().sum() / static_cast<double>(n - 1)
                           : 0.0;
    sd(c) = std::sqrt(v);
    if (!(sd(c) > 0.0) || !std::isfinite(sd(c))) sd(c) = 1.0;
  }
}

}  // namespace

void TrainSchedule::validate() const {
  if (epochs < 1 || batches_per_epoch < 1 || batch_size < 1)
    throw InvalidParameter("schedule: epochs, batches_per_epoch and batch_size must be >= 1");
  if (!(learning_rate > 0.0)) throw InvalidParameter("schedule: learning rate must be > 0");
  if (!(lr_alpha >= 0.0 && lr_alpha <= 1.0)) throw InvalidParameter("schedule: lr_alpha must lie in [0, 1]");
  if (calibration_size < 2) throw InvalidParameter("schedule: calibration batch needs >= 2 items");
}

double TrainResult::epoch_loss(int epoch) const {
  const auto per = static_cast<long>(model.provenance.batches_per_epoch);
  const long lo = per * epoch;
  if (epoch < 0 || lo + per > static_cast<long>(loss_trace.size()))
    throw InvalidParameter("epoch_loss: epoch out of range");
  return std::accumulate(loss_trace.begin() + lo, loss_trace.begin() + lo + per, 0.0) /
         static_cast<double>(per);
}

Standardization compute_standardization(const std::vector<TrainingItem>& items) {
  if (items.empty()) throw InsufficientData("standardization: empty calibration batch");
  Eigen::Index n_el = 0;
  for (const auto& it : items) n_el += it.set.size();
  const auto& first = items.front();
  Eigen::MatrixXd xs(n_el, first.set.x.cols()), ys(n_el, first.set.y.cols());
  Eigen::MatrixXd ws(static_cast<Eigen::Index>(items.size()), first.omega.size());
  Eigen::Index r = 0;
  for (std::size_t i = 0; i < items.size(); ++i) {
    const auto& it = items[i];
    xs.middleRows(r, it.set.size()) = it.set.x;
    ys.middleRows(r, it.set.size()) = it.set.y;
    r += it.set.size();
    ws.row(static_cast<Eigen::Index>(i)) = it.omega.transpose();
  }
  Standardization s;
  mean_sd(xs, s.x_mean, s.x_sd);
  mean_sd(ys, s.y_mean, s.y_sd);
  mean_sd(ws, s.omega_mean, s.omega_sd);
  return s;
}

TrainResult train_npe(const GeneratorMode& mode, const PriorSpec& prior, const NpeModel& init,
                      const TrainSchedule& schedule, RngStream rng) {
  const auto t0 = std::chrono::steady_clock::now();
  schedule.validate();
  prior.validate();
  const auto& spec = init.spec;
  if (spec.x_dim != prior.x_dim() || spec.param_dim != prior.param_dim() || spec.y_dim != mode.y_dim())
    throw DimensionMismatch("train_npe: network dimensions do not match prior and generator");
  if (init.weights.size() != spec.n_params())
    throw DimensionMismatch("train_npe: weight vector does not match network");

  TrainResult result;
  result.model = init;
  NpeModel& model = result.model;
  TrainingGenerator gen(mode, prior);
  RngStream cal_rng = rng.child(0);
  RngStream pool_rng = rng.child(1);
  RngStream batch_rng = rng.child(2);
  RngStream aux_rng = rng.child(3);
  RngStream shuffle_rng = rng.child(4);

  std::vector<TrainingItem> pool;
  if (!mode.online) {
    if (!mode.budget || *mode.budget < 1)
      throw InvalidParameter("train_npe: offline training needs a positive item budget");
    pool.reserve(static_cast<std::size_t>(*mode.budget));
    for (long i = 0; i < *mode.budget; ++i) pool.push_back(gen.next(pool_rng));
    model.stats = compute_standardization(pool);
  } else {
    std::vector<TrainingItem> cal;
    cal.reserve(static_cast<std::size_t>(schedule.calibration_size));
    for (int i = 0; i < schedule.calibration_size; ++i) cal.push_back(gen.next(cal_rng));
    model.stats = compute_standardization(cal);
  }

  model.provenance.mode = mode.name();
  model.provenance.epochs = schedule.epochs;
  model.provenance.batches_per_epoch = schedule.batches_per_epoch;
  model.provenance.batch_size = schedule.batch_size;
  model.provenance.learning_rate = schedule.learning_rate;
  model.provenance.lr_alpha = schedule.lr_alpha;
  model.provenance.observations_per_set = mode.observations_per_set;

  const int q = spec.param_dim;
  const int n_aux = spec.flow.augmented_dim - q;
  const int b = schedule.batch_size;
  const long total = schedule.total_steps();
  AdamState adam(model.weights.size());
  Eigen::VectorXd grad(model.weights.size());
  std::vector<ObservationSet> sets(static_cast<std::size_t>(b));
  Eigen::MatrixXd omega(b, q), aux(b, n_aux);
  std::vector<std::size_t> order(pool.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::size_t cursor = order.size();
  result.loss_trace.reserve(static_cast<std::size_t>(total));

  for (long step = 0; step < total; ++step) {
    for (int i = 0; i < b; ++i) {
      if (mode.online) {
        TrainingItem it = gen.next(batch_rng);
        sets[static_cast<std::size_t>(i)] = std::move(it.set);
        omega.row(i) = it.omega.transpose();
      } else {
        if (cursor == order.size()) {
          shuffle_rng.shuffle(order);
          cursor = 0;
        }
        const auto& it = pool[order[cursor++]];
        sets[static_cast<std::size_t>(i)] = it.set;
        omega.row(i) = it.omega.transpose();
      }
      for (int a = 0; a < n_aux; ++a) aux(i, a) = aux_rng.normal();
    }
    const double loss = npe_loss(model, sets, omega, aux, &grad);
    if (!std::isfinite(loss) || !grad.allFinite()) {
      const std::uint64_t digest =
          fnv1a(omega.data(), sizeof(double) * static_cast<std::size_t>(omega.size()));
      throw NumericalOverflow("train_npe: non-finite loss at step " + std::to_string(step) +
                              " (batch digest " + std::to_string(digest) + ")");
    }
    result.loss_trace.push_back(loss);
    adam_step(adam, model.weights, grad,
              cosine_lr(step, total, schedule.learning_rate, schedule.lr_alpha));
  }
  result.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return result;
}

Eigen::MatrixXd npe_posterior(const NpeModel& model, const ObservationSet& obs, Eigen::Index n_draws,
                              RngStream& rng) {
  obs.validate();
  if (obs.x.cols() != model.spec.x_dim || obs.y.cols() != model.spec.y_dim)
    throw DimensionMismatch("npe_posterior: observation has x width " + std::to_string(obs.x.cols()) +
                            " and y width " + std::to_string(obs.y.cols()) + ", model expects " +
                            std::to_string(model.spec.x_dim) + " and " +
                            std::to_string(model.spec.y_dim));
  if (n_draws < 1) throw InvalidParameter("npe_posterior: n_draws must be positive");
  return flow_sample(model, obs, n_draws, rng);
}

}  // namespace uasabi
