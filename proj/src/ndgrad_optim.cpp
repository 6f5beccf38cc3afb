#include <algorithm>
#include <cmath>

#include "json_util.hpp"
#include "ldiag/ndgrad.hpp"

namespace ldiag::nd {

Tensor xavier_uniform(Shape shape, Index fan_in, Index fan_out, std::mt19937_64& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> u(-a, a);
  Eigen::VectorXd v(numel(shape));
  for (auto& x : v) x = u(rng);
  return Tensor::param(std::move(shape), std::move(v));
}

Adam::Adam(std::vector<Tensor> params, AdamConfig config) : params_(std::move(params)), config_(config) {
  for (const auto& p : params_) {
    m_.push_back(Eigen::VectorXd::Zero(p.size()));
    v_.push_back(Eigen::VectorXd::Zero(p.size()));
  }
}

void Adam::step() {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (!params_[i].has_grad()) {
      throw Error(Errc::kMissingGrad, "parameter " + std::to_string(i) + " has no gradient");
    }
  }
  ++t_;
  const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const Eigen::VectorXd& g = params_[i].grad();
    m_[i] = config_.beta1 * m_[i] + (1.0 - config_.beta1) * g;
    v_[i] = config_.beta2 * v_[i] + (1.0 - config_.beta2) * g.cwiseAbs2();
    params_[i].mutable_value().array() -=
        config_.learning_rate * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + config_.epsilon);
    params_[i].clear_grad();
  }
}

double grad_check(const std::function<Tensor()>& fn, const std::vector<Tensor>& params, double h) {
  for (auto p : params) p.clear_grad();
  clear_tape();
  backward(fn());
  std::vector<Eigen::VectorXd> analytic;
  for (const auto& p : params) analytic.push_back(p.has_grad() ? p.grad() : Eigen::VectorXd::Zero(p.size()));

  double worst = 0.0;
  NoGradGuard guard;
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor p = params[i];
    for (Index j = 0; j < p.size(); ++j) {
      const double saved = p.value()(j);
      p.mutable_value()(j) = saved + h;
      const double up = fn().item();
      p.mutable_value()(j) = saved - h;
      const double down = fn().item();
      p.mutable_value()(j) = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic[i](j);
      worst = std::max(worst, std::abs(a - numeric) / std::max(1e-8, std::abs(a) + std::abs(numeric)));
    }
    p.clear_grad();
  }
  return worst;
}

double grad_check(const std::function<Tensor(const Tensor&)>& fn, const Tensor& point, double h) {
  Tensor x(point.shape(), point.value(), true);
  return grad_check([&] { return fn(x); }, {x}, h);
}

std::string save_checkpoint(const ParamMap& params) {
  detail::Json j;
  j["version"] = kCheckpointVersion;
  j["params"] = detail::Json::object();
  for (const auto& [name, t] : params) {
    j["params"][name] = {{"shape", t.shape()}, {"values", detail::to_json(t.value())}};
  }
  return j.dump();
}

ParamMap load_checkpoint(const std::string& text) {
  const auto j = detail::parse_json(text, "checkpoint");
  try {
    if (j.at("version").get<int>() != kCheckpointVersion) {
      throw Error(Errc::kMalformedRow, "unsupported checkpoint version " + j.at("version").dump());
    }
    ParamMap out;
    for (const auto& [name, entry] : j.at("params").items()) {
      out.emplace(name, Tensor::param(entry.at("shape").get<Shape>(), detail::vector_from(entry.at("values"))));
    }
    return out;
  } catch (const detail::Json::exception& e) {
    throw Error(Errc::kMalformedRow, std::string("checkpoint: ") + e.what());
  }
}

}  // namespace ldiag::nd
