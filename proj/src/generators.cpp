#include "uasabi/error.hpp"
#include "uasabi/inference.hpp"

namespace uasabi {
namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

Eigen::VectorXd concat(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  Eigen::VectorXd out(a.size() + b.size());
  out << a, b;
  return out;
}

}  // namespace

void PriorSpec::validate() const {
  if (omega_prior.empty()) throw InvalidParameter("prior: at least one parameter required");
}

Eigen::VectorXd PriorSpec::sample_x(RngStream& rng) const {
  Eigen::VectorXd x(x_dim());
  for (int i = 0; i < x_dim(); ++i) x(i) = x_prior[static_cast<std::size_t>(i)].sample(rng);
  return x;
}

Eigen::VectorXd PriorSpec::sample_omega(RngStream& rng) const {
  Eigen::VectorXd w(param_dim());
  for (int i = 0; i < param_dim(); ++i) w(i) = omega_prior[static_cast<std::size_t>(i)].sample(rng);
  return w;
}

double PriorSpec::log_prior(const Eigen::VectorXd& omega) const {
  if (omega.size() != param_dim()) throw DimensionMismatch("prior: parameter length mismatch");
  double lp = 0.0;
  for (int i = 0; i < param_dim(); ++i) lp += omega_prior[static_cast<std::size_t>(i)].logpdf(omega(i));
  return lp;
}

int GeneratorMode::y_dim() const {
  return std::visit(Overloaded{
                        [](const SimulatorSource& s) { return s.y_dim; },
                        [](const PointSurrogateSource& s) { return static_cast<int>(s.models.size()); },
                        [](const UncertaintyAwareSource& s) {
                          return static_cast<int>(s.posteriors.size());
                        },
                    },
                    source);
}

std::string GeneratorMode::name() const {
  const char* base = std::visit(Overloaded{
                                    [](const SimulatorSource&) { return "simulator"; },
                                    [](const PointSurrogateSource&) { return "point-surrogate"; },
                                    [](const UncertaintyAwareSource&) { return "uncertainty-aware"; },
                                },
                                source);
  return std::string(base) + (online ? "/online" : "/offline");
}

TrainingItem generate_training_item(const GeneratorMode& mode, const PriorSpec& prior,
                                    RngStream& rng) {
  if (mode.observations_per_set < 1)
    throw InvalidParameter("generator: observations_per_set must be >= 1");
  const int n = mode.observations_per_set;
  const int y_dim = mode.y_dim();
  if (y_dim < 1) throw InvalidParameter("generator: source has no outputs");
  TrainingItem item;
  item.omega = prior.sample_omega(rng);
  item.set.x.resize(n, prior.x_dim());
  item.set.y.resize(n, y_dim);
  for (int j = 0; j < n; ++j) item.set.x.row(j) = prior.sample_x(rng).transpose();

  std::visit(
      Overloaded{
          [&](const SimulatorSource& s) {
            for (int j = 0; j < n; ++j) {
              const Eigen::VectorXd y = s.model(item.set.x.row(j).transpose(), item.omega);
              if (y.size() != y_dim) throw DimensionMismatch("simulator returned wrong output width");
              item.set.y.row(j) = y.transpose();
            }
          },
          [&](const PointSurrogateSource& s) {
            for (int j = 0; j < n; ++j) {
              const Eigen::VectorXd p = concat(item.set.x.row(j).transpose(), item.omega);
              for (int o = 0; o < y_dim; ++o)
                item.set.y(j, o) = pce_predict(s.models[static_cast<std::size_t>(o)], p);
            }
          },
          [&](const UncertaintyAwareSource& s) {
            for (int o = 0; o < y_dim; ++o) {
              const auto& post = s.posteriors[static_cast<std::size_t>(o)];
              if (post.n_draws() == 0) throw EmptyPosterior("generator: surrogate posterior is empty");
              const auto draw = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(post.n_draws())));
              for (int j = 0; j < n; ++j)
                item.set.y(j, o) =
                    sample_error_adjusted(post, draw, item.set.x.row(j).transpose(), item.omega, rng);
            }
          },
      },
      mode.source);
  return item;
}

TrainingGenerator::TrainingGenerator(GeneratorMode mode, PriorSpec prior)
    : mode_(std::move(mode)), prior_(std::move(prior)) {
  prior_.validate();
}

TrainingItem TrainingGenerator::next(RngStream& rng) {
  if (mode_.budget && generated_ >= *mode_.budget)
    throw BudgetExhausted("generator: budget of " + std::to_string(*mode_.budget) +
                          " items exhausted");
  ++generated_;
  return generate_training_item(mode_, prior_, rng);
}

}  // namespace uasabi
