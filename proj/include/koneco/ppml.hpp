#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "koneco/config.hpp"
#include "koneco/corpus.hpp"
#include "koneco/error.hpp"

namespace koneco {
namespace ppml {

// Covariates are log-transformed where named so; fixed effects become 0/1
// dummies with the first (sorted) level of each group dropped as reference.
struct GravitySpec {
    bool log_distance = true;
    bool agreement = true;
    bool log_gdp = false;  // origin and destination, WDI
    bool log_population = false;
    bool fe_exporter = true;
    bool fe_importer = true;
    bool fe_pair = false;
    double ridge = 1e-8;

    // The intercept is always present, so an all-off spec is the legal
    // intercept-only model.
    void validate() const {
        if (ridge < 0) throw ArgumentError("ridge must be >= 0");
    }
};

inline GravitySpec gravity_spec_from(const Config& cfg, const std::string& section = "ppml") {
    GravitySpec s;
    s.log_distance = cfg.get_bool(section, "log_distance", s.log_distance);
    s.agreement = cfg.get_bool(section, "agreement", s.agreement);
    s.log_gdp = cfg.get_bool(section, "log_gdp", s.log_gdp);
    s.log_population = cfg.get_bool(section, "log_population", s.log_population);
    s.fe_exporter = cfg.get_bool(section, "fe_exporter", s.fe_exporter);
    s.fe_importer = cfg.get_bool(section, "fe_importer", s.fe_importer);
    s.fe_pair = cfg.get_bool(section, "fe_pair", s.fe_pair);
    s.ridge = cfg.get_double(section, "ridge", s.ridge);
    s.validate();
    return s;
}

// Column layout of a fitted design, used to build prediction rows for new
// records. FE levels are the sorted levels seen at fit time.
struct DesignInfo {
    GravitySpec spec;
    std::vector<std::string> col_names;
    std::vector<std::string> exporter_levels, importer_levels, pair_levels;
};

struct Design {
    Eigen::MatrixXd X;
    Eigen::VectorXd y;
    DesignInfo info;
};

namespace detail {

inline double log_or_throw(const std::optional<double>& v, const char* field, std::size_t row) {
    if (!v) throw DataError(std::string("row ") + std::to_string(row) + ": " + field + " absent", row);
    if (!(*v > 0))
        throw DataError(std::string("row ") + std::to_string(row) + ": " + field +
                            " must be > 0 for the log transform",
                        row);
    return std::log(*v);
}

inline std::optional<int> level_index(const std::vector<std::string>& levels, const std::string& v) {
    auto it = std::lower_bound(levels.begin(), levels.end(), v);
    if (it == levels.end() || *it != v) return std::nullopt;
    return static_cast<int>(it - levels.begin());
}

inline int covariate_count(const GravitySpec& spec) {
    return 1 + (spec.log_distance ? 1 : 0) + (spec.agreement ? 1 : 0) + (spec.log_gdp ? 2 : 0) +
           (spec.log_population ? 2 : 0);
}

// Covariate block shared by the fit design and prediction rows.
inline Eigen::RowVectorXd covariate_row(const TradeRecord& r, const GravitySpec& spec,
                                        std::size_t row_no) {
    Eigen::RowVectorXd row(covariate_count(spec));
    int j = 0;
    row[j++] = 1.0;  // intercept
    if (spec.log_distance) row[j++] = log_or_throw(r.distance, "dist", row_no);
    if (spec.agreement) {
        if (!r.agreement)
            throw DataError("row " + std::to_string(row_no) + ": agree absent", row_no);
        row[j++] = *r.agreement ? 1.0 : 0.0;
    }
    if (spec.log_gdp) {
        row[j++] = log_or_throw(r.gdp_wdi_o, "gdp_wdi_o", row_no);
        row[j++] = log_or_throw(r.gdp_wdi_d, "gdp_wdi_d", row_no);
    }
    if (spec.log_population) {
        row[j++] = log_or_throw(r.pop_o, "pop_o", row_no);
        row[j++] = log_or_throw(r.pop_d, "pop_d", row_no);
    }
    return row;
}

}  // namespace detail

// Builds the dense design: intercept, covariates, then one dummy column per
// non-reference fixed-effect level. Zeros in y are retained.
inline Design design_matrix(const TradeTable& table, const GravitySpec& spec) {
    spec.validate();
    const auto n = static_cast<Eigen::Index>(table.records.size());
    if (n == 0) throw ArgumentError("design_matrix: empty table");

    Design d;
    d.info.spec = spec;
    std::set<std::string> exp_set, imp_set, pair_set;
    for (const auto& r : table.records) {
        if (spec.fe_exporter) exp_set.insert(r.exporter);
        if (spec.fe_importer) imp_set.insert(r.importer);
        if (spec.fe_pair) pair_set.insert(r.exporter + "_" + r.importer);
    }
    d.info.exporter_levels.assign(exp_set.begin(), exp_set.end());
    d.info.importer_levels.assign(imp_set.begin(), imp_set.end());
    d.info.pair_levels.assign(pair_set.begin(), pair_set.end());

    const int n_cov = detail::covariate_count(spec);
    auto fe_cols = [](const std::vector<std::string>& levels) {
        return levels.empty() ? 0 : static_cast<int>(levels.size()) - 1;
    };
    const int k = n_cov + fe_cols(d.info.exporter_levels) + fe_cols(d.info.importer_levels) +
                  fe_cols(d.info.pair_levels);
    if (n < k)
        throw ArgumentError("design_matrix: fewer rows (" + std::to_string(n) + ") than columns (" +
                            std::to_string(k) + ")");

    d.info.col_names.push_back("(Intercept)");
    if (spec.log_distance) d.info.col_names.push_back("log_dist");
    if (spec.agreement) d.info.col_names.push_back("agree");
    if (spec.log_gdp) {
        d.info.col_names.push_back("log_gdp_wdi_o");
        d.info.col_names.push_back("log_gdp_wdi_d");
    }
    if (spec.log_population) {
        d.info.col_names.push_back("log_pop_o");
        d.info.col_names.push_back("log_pop_d");
    }
    for (std::size_t l = 1; l < d.info.exporter_levels.size(); ++l)
        d.info.col_names.push_back("fe_exp:" + d.info.exporter_levels[l]);
    for (std::size_t l = 1; l < d.info.importer_levels.size(); ++l)
        d.info.col_names.push_back("fe_imp:" + d.info.importer_levels[l]);
    for (std::size_t l = 1; l < d.info.pair_levels.size(); ++l)
        d.info.col_names.push_back("fe_pair:" + d.info.pair_levels[l]);

    d.X = Eigen::MatrixXd::Zero(n, k);
    d.y = Eigen::VectorXd::Zero(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& r = table.records[static_cast<std::size_t>(i)];
        if (!r.trade) throw DataError("row " + std::to_string(i + 1) + ": trade absent",
                                      static_cast<std::size_t>(i + 1));
        d.y[i] = *r.trade;
        d.X.row(i).head(n_cov) = detail::covariate_row(r, spec, static_cast<std::size_t>(i + 1));
        int offset = n_cov;
        if (spec.fe_exporter) {
            auto l = detail::level_index(d.info.exporter_levels, r.exporter);
            if (*l > 0) d.X(i, offset + *l - 1) = 1.0;
            offset += fe_cols(d.info.exporter_levels);
        }
        if (spec.fe_importer) {
            auto l = detail::level_index(d.info.importer_levels, r.importer);
            if (*l > 0) d.X(i, offset + *l - 1) = 1.0;
            offset += fe_cols(d.info.importer_levels);
        }
        if (spec.fe_pair) {
            auto l = detail::level_index(d.info.pair_levels, r.exporter + "_" + r.importer);
            if (*l > 0) d.X(i, offset + *l - 1) = 1.0;
        }
    }
    return d;
}

struct PpmlFit {
    Eigen::VectorXd beta;
    std::vector<std::string> col_names;
    int iterations = 0;
    bool converged = false;
    double deviance = 0.0;
    Eigen::VectorXd mu;
    std::vector<int> separation_flags;  // coefficient indexes with |beta| > 20
};

namespace detail {

inline double poisson_deviance(const Eigen::VectorXd& y, const Eigen::VectorXd& mu) {
    double dev = 0.0;
    for (Eigen::Index i = 0; i < y.size(); ++i) {
        if (y[i] > 0) dev += 2.0 * (y[i] * std::log(y[i] / mu[i]) - (y[i] - mu[i]));
        else dev += 2.0 * mu[i];
    }
    return dev;
}

inline Eigen::VectorXd clamped_mu(const Eigen::MatrixXd& X, const Eigen::VectorXd& beta) {
    Eigen::VectorXd eta = X * beta;
    for (Eigen::Index i = 0; i < eta.size(); ++i) eta[i] = std::min(eta[i], 50.0);
    return eta.array().exp();
}

}  // namespace detail

// Poisson pseudo-maximum-likelihood by Newton scoring on ridge-stabilized
// normal equations, with step halving on deviance increases. Converged when
// max |X'(y - mu)| / n < 1e-8 or after 100 iterations.
inline PpmlFit fit_ppml(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const GravitySpec& spec,
                        const std::vector<std::string>& col_names = {}) {
    spec.validate();
    const auto n = X.rows();
    const auto k = X.cols();
    if (n == 0 || k == 0) throw ArgumentError("fit_ppml: empty design");
    if (y.size() != n) throw ArgumentError("fit_ppml: X and y disagree on rows");
    if ((y.array() < 0).any()) throw ArgumentError("fit_ppml: y must be >= 0");
    double ybar = y.mean();
    if (!(ybar > 0)) throw ArgumentError("fit_ppml: outcome is identically zero");

    PpmlFit fit;
    fit.col_names = col_names;
    fit.beta = Eigen::VectorXd::Zero(k);
    fit.beta[0] = std::log(ybar);  // exact for the intercept-only model

    constexpr double kTol = 1e-8;
    constexpr int kMaxIter = 100;
    Eigen::VectorXd mu = detail::clamped_mu(X, fit.beta);
    double dev = detail::poisson_deviance(y, mu);
    for (int iter = 0; iter < kMaxIter; ++iter) {
        Eigen::VectorXd score = X.transpose() * (y - mu);
        fit.iterations = iter;
        if (score.cwiseAbs().maxCoeff() / static_cast<double>(n) < kTol) {
            fit.converged = true;
            break;
        }
        Eigen::MatrixXd H = X.transpose() * mu.asDiagonal() * X;
        H.diagonal().array() += spec.ridge;
        Eigen::LDLT<Eigen::MatrixXd> ldlt(H);
        if (ldlt.info() != Eigen::Success)
            throw SingularityError("fit_ppml: normal equations not solvable");
        Eigen::VectorXd delta = ldlt.solve(score);
        if (!delta.allFinite())
            throw SingularityError("fit_ppml: design is rank deficient beyond ridge repair");
        // Step halving keeps the deviance monotone.
        double step = 1.0;
        for (int half = 0; half < 40; ++half) {
            Eigen::VectorXd candidate = fit.beta + step * delta;
            Eigen::VectorXd mu_c = detail::clamped_mu(X, candidate);
            double dev_c = detail::poisson_deviance(y, mu_c);
            if (std::isfinite(dev_c) && dev_c <= dev + 1e-12) {
                fit.beta = candidate;
                mu = mu_c;
                dev = dev_c;
                break;
            }
            step *= 0.5;
            if (half == 39) {
                fit.beta += step * delta;
                mu = detail::clamped_mu(X, fit.beta);
                dev = detail::poisson_deviance(y, mu);
            }
        }
    }
    fit.mu = mu;
    fit.deviance = dev;
    for (Eigen::Index j = 0; j < k; ++j)
        if (std::fabs(fit.beta[j]) > 20.0) fit.separation_flags.push_back(static_cast<int>(j));
    return fit;
}

// mu = exp(X_new beta); strictly positive by construction.
inline Eigen::VectorXd predict_ppml(const PpmlFit& fit, const Eigen::MatrixXd& X_new) {
    if (X_new.cols() != fit.beta.size())
        throw ArgumentError("predict_ppml: column count does not match the fit");
    return detail::clamped_mu(X_new, fit.beta);
}

struct PpmlModel {
    PpmlFit fit;
    DesignInfo info;
};

inline PpmlModel fit_gravity(const TradeTable& table, const GravitySpec& spec) {
    Design d = design_matrix(table, spec);
    PpmlModel m;
    m.fit = fit_ppml(d.X, d.y, spec, d.info.col_names);
    m.info = d.info;
    return m;
}

// Builds the prediction row for a new record under a fitted design. Returns
// nullopt for cold starts (fixed-effect level unseen at fit time).
inline std::optional<double> predict_record(const PpmlModel& model, const TradeRecord& r) {
    const auto& spec = model.info.spec;
    const int n_cov = detail::covariate_count(spec);
    auto fe_cols = [](const std::vector<std::string>& levels) {
        return levels.empty() ? 0 : static_cast<int>(levels.size()) - 1;
    };
    Eigen::RowVectorXd row = Eigen::RowVectorXd::Zero(model.fit.beta.size());
    row.head(n_cov) = detail::covariate_row(r, spec, 0);
    int offset = n_cov;
    if (spec.fe_exporter) {
        auto l = detail::level_index(model.info.exporter_levels, r.exporter);
        if (!l) return std::nullopt;
        if (*l > 0) row[offset + *l - 1] = 1.0;
        offset += fe_cols(model.info.exporter_levels);
    }
    if (spec.fe_importer) {
        auto l = detail::level_index(model.info.importer_levels, r.importer);
        if (!l) return std::nullopt;
        if (*l > 0) row[offset + *l - 1] = 1.0;
        offset += fe_cols(model.info.importer_levels);
    }
    if (spec.fe_pair) {
        auto l = detail::level_index(model.info.pair_levels, r.exporter + "_" + r.importer);
        if (!l) return std::nullopt;
        if (*l > 0) row[offset + *l - 1] = 1.0;
    }
    return predict_ppml(model.fit, row)[0];
}

}  // namespace ppml
}  // namespace koneco
