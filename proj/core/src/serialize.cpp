#include "windgp/serialize.hpp"

#include <cmath>
#include <limits>

#include "json.hpp"
#include "windgp/csv.hpp"
#include "windgp/errors.hpp"

namespace windgp {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

// doubles as shortest round-trip strings keeps the files byte-stable
ordered_json num(double v) { return ordered_json::parse(csv::format_double(v)); }

ordered_json vec_json(const Eigen::VectorXd& v) {
  ordered_json a = ordered_json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(num(v[i]));
  return a;
}

ordered_json mat_json(const Eigen::MatrixXd& m) {
  ordered_json rows = ordered_json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    ordered_json row = ordered_json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(num(m(i, j)));
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::VectorXd vec_from(const json& a) {
  Eigen::VectorXd v(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) v[static_cast<Eigen::Index>(i)] = a[i].get<double>();
  return v;
}

Eigen::MatrixXd mat_from(const json& rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows[0].size();
  Eigen::MatrixXd m(r, c);
  for (std::size_t i = 0; i < r; ++i) {
    if (rows[i].size() != c) throw SchemaMismatch("ragged matrix in JSON");
    for (std::size_t j = 0; j < c; ++j) {
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j].get<double>();
    }
  }
  return m;
}

ordered_json prior_json(const LatentPriorConfig& p) {
  ordered_json j;
  j["lengthscale_scale_w"] = num(p.lengthscale_scale_w);
  j["lengthscale_scale_l"] = num(p.lengthscale_scale_l);
  j["lengthscale_scale_mu"] = num(p.lengthscale_scale_mu);
  j["variance_w"] = num(p.variance_w);
  j["variance_l"] = num(p.variance_l);
  j["variance_mu"] = num(p.variance_mu);
  j["nugget"] = num(p.nugget);
  return j;
}

LatentPriorConfig prior_from(const json& j) {
  LatentPriorConfig p;
  p.lengthscale_scale_w = j.at("lengthscale_scale_w").get<double>();
  p.lengthscale_scale_l = j.at("lengthscale_scale_l").get<double>();
  p.lengthscale_scale_mu = j.at("lengthscale_scale_mu").get<double>();
  p.variance_w = j.at("variance_w").get<double>();
  p.variance_l = j.at("variance_l").get<double>();
  p.variance_mu = j.at("variance_mu").get<double>();
  p.nugget = j.value("nugget", 0.0);
  return p;
}

}  // namespace

std::string kernel_model_to_json(const KernelModel& m) {
  ordered_json j;
  j["family"] = to_string(m.family());
  j["noise_variance"] = num(m.noise_variance);
  switch (m.family()) {
    case KernelFamily::Rbf: {
      const RbfParams& p = m.rbf();
      j["signal_variance"] = num(p.signal_variance);
      j["lengthscales"] = vec_json(p.lengthscales);
      break;
    }
    case KernelFamily::Sm: {
      const SmParams& p = m.sm();
      j["weights"] = vec_json(p.weights);
      j["spectral_means"] = mat_json(p.spectral_means);
      j["spectral_variances"] = mat_json(p.spectral_variances);
      j["f_max"] = vec_json(p.f_max);
      break;
    }
    case KernelFamily::Gsm: {
      const GsmLatents& p = m.gsm();
      j["anchors"] = mat_json(p.anchors);
      j["f_max"] = vec_json(p.f_max);
      j["prior"] = prior_json(p.prior);
      ordered_json w = ordered_json::array(), l = ordered_json::array(),
                   mu = ordered_json::array();
      for (int d = 0; d < p.dim(); ++d) {
        w.push_back(mat_json(p.log_w[static_cast<std::size_t>(d)]));
        l.push_back(mat_json(p.log_l[static_cast<std::size_t>(d)]));
        mu.push_back(mat_json(p.logit_mu[static_cast<std::size_t>(d)]));
      }
      j["log_w"] = std::move(w);
      j["log_l"] = std::move(l);
      j["logit_mu"] = std::move(mu);
      break;
    }
  }
  return j.dump(2) + "\n";
}

KernelModel kernel_model_from_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    KernelModel m;
    m.noise_variance = j.at("noise_variance").get<double>();
    const KernelFamily family = kernel_family_from_string(j.at("family").get<std::string>());
    switch (family) {
      case KernelFamily::Rbf: {
        RbfParams p;
        p.signal_variance = j.at("signal_variance").get<double>();
        p.lengthscales = vec_from(j.at("lengthscales"));
        m.params = std::move(p);
        break;
      }
      case KernelFamily::Sm: {
        SmParams p;
        p.weights = vec_from(j.at("weights"));
        p.spectral_means = mat_from(j.at("spectral_means"));
        p.spectral_variances = mat_from(j.at("spectral_variances"));
        p.f_max = vec_from(j.at("f_max"));
        m.params = std::move(p);
        break;
      }
      case KernelFamily::Gsm: {
        GsmLatents p;
        p.anchors = mat_from(j.at("anchors"));
        p.f_max = vec_from(j.at("f_max"));
        p.prior = prior_from(j.at("prior"));
        const json &w = j.at("log_w"), &l = j.at("log_l"), &mu = j.at("logit_mu");
        for (std::size_t d = 0; d < w.size(); ++d) {
          p.log_w.push_back(mat_from(w[d]));
          p.log_l.push_back(mat_from(l[d]));
          p.logit_mu.push_back(mat_from(mu[d]));
        }
        m.params = std::move(p);
        break;
      }
    }
    validate_kernel(m);
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaMismatch(std::string("kernel model JSON: ") + e.what());
  }
}

std::string checkpoint_to_json(const OptimCheckpoint& c, const FlatParams& prototype) {
  ordered_json j;
  j["family"] = to_string(prototype.family);
  j["q"] = prototype.q;
  j["dim"] = prototype.dim;
  j["f_max"] = vec_json(prototype.f_max);
  if (prototype.family == KernelFamily::Gsm) {
    j["anchors"] = mat_json(prototype.anchors);
    j["prior"] = prior_json(prototype.latent_prior);
  }
  j["params"] = vec_json(c.params);
  j["adam_m"] = vec_json(c.state.m);
  j["adam_v"] = vec_json(c.state.v);
  j["adam_t"] = c.state.t;
  j["next_iter"] = c.next_iter;
  j["best_params"] = vec_json(c.best_params);
  j["best_objective"] = num(c.best_objective);
  ordered_json tr = ordered_json::array();
  for (double f : c.trace) {
    // +inf entries (retreats) are JSON-unrepresentable; store as string
    if (std::isfinite(f)) {
      tr.push_back(num(f));
    } else {
      tr.push_back("inf");
    }
  }
  j["trace"] = std::move(tr);
  return j.dump() + "\n";
}

LoadedCheckpoint checkpoint_from_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    LoadedCheckpoint out;
    const KernelFamily family = kernel_family_from_string(j.at("family").get<std::string>());
    const int q = j.at("q").get<int>();
    const int dim = j.at("dim").get<int>();
    const Eigen::VectorXd f_max = vec_from(j.at("f_max"));
    Eigen::MatrixXd anchors;
    LatentPriorConfig prior;
    if (family == KernelFamily::Gsm) {
      anchors = mat_from(j.at("anchors"));
      prior = prior_from(j.at("prior"));
    }
    out.prototype = flat_prototype(family, q, dim, f_max, anchors, prior);
    out.checkpoint.params = vec_from(j.at("params"));
    out.checkpoint.state.m = vec_from(j.at("adam_m"));
    out.checkpoint.state.v = vec_from(j.at("adam_v"));
    out.checkpoint.state.t = j.at("adam_t").get<long>();
    out.checkpoint.next_iter = j.at("next_iter").get<long>();
    out.checkpoint.best_params = vec_from(j.at("best_params"));
    out.checkpoint.best_objective = j.at("best_objective").get<double>();
    for (const auto& item : j.at("trace")) {
      if (item.is_string()) {
        out.checkpoint.trace.push_back(std::numeric_limits<double>::infinity());
      } else {
        out.checkpoint.trace.push_back(item.get<double>());
      }
    }
    if (out.checkpoint.params.size() != out.prototype.size()) {
      throw SchemaMismatch("checkpoint param length disagrees with its layout");
    }
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaMismatch(std::string("checkpoint JSON: ") + e.what());
  }
}

}  // namespace windgp
