/// @file integrator.hpp
/// @brief Semi-implicit Euler-Maruyama for the vorticity equation and its
///        tangent processes on a shared noise path.
///
/// One step with D = 1 + dt nu |k|^2:
///   w'   = D^{-1} [w + dt B(Kw, w) + Q(w) dW]
///   J'   = D^{-1} [J + dt Bt(w, J) + DQ(w)[J] dW]
///   A'   = D^{-1} [A + dt Bt(w, A) + DQ(w)[A] dW + dt Q(w) v]
///   rho' = D^{-1} [rho + dt Bt(w, rho) + DQ(w)[rho] dW - dt Q(w) v]
///   zeta'= Dz^{-1}[zeta + dt Q_N Bt(w, zeta) + DQ(w)[zeta] dW]
/// with Dz = 1 + dt B1 |k|^2 on |k| <= N and D elsewhere.  J, A and rho are
/// the exact linearizations of the discrete map, so rho = J - A holds to
/// roundoff and the discrete integration-by-parts identity is exact for
/// adapted v.  The control uses the drift-only predictor of zeta^l:
///   F = P_N Bt(w, zeta) + (B1 - nu)|k|^2 zeta^l / (1 + dt B1 |k|^2),
/// which makes rho follow zeta exactly when DQ = 0.
#pragma once

#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>

#include "vortex_mixer/noise_model.hpp"
#include "vortex_mixer/nonlinearity.hpp"
#include "vortex_mixer/transform.hpp"

namespace vortex {

inline constexpr double kBlowupThreshold = 1e6;

struct StepScheme {
    double dt = 1e-3;
    double nu = 1.0;
    double B1 = 24.0;
    int N = 4;             ///< control band for zeta and F
    bool advect = true;    ///< false drops B and Bt (linear test mode)

    void validate() const {
        if (!(dt > 0.0) || !std::isfinite(dt)) throw std::invalid_argument("scheme: dt must be > 0");
        if (!(nu > 0.0)) throw std::invalid_argument("scheme: nu must be > 0");
        if (N < 1) throw std::invalid_argument("scheme: control band N must be >= 1");
        if (B1 < nu * N * N)
            throw std::invalid_argument("scheme: B1 = " + std::to_string(B1) +
                                        " violates the constraint that B1 be bigger than nu*N^2 = " +
                                        std::to_string(nu * N * N));
    }
};

struct TrajectoryState {
    double t = 0.0;
    SpectralField w;
    std::optional<SpectralField> J_xi;
    std::optional<SpectralField> zeta;
    std::optional<SpectralField> rho;
    std::optional<SpectralField> malliavin;  ///< A_{0,t} v
    double acc_stoch_int = 0.0;   ///< sum v . dW
    double acc_control_sq = 0.0;  ///< sum |v|^2 dt
    double acc_h1 = 0.0;          ///< sum ||w||_1^2 dt (left point)
    std::size_t steps = 0;
    bool blown_up = false;
    bool freeze_w = false;        ///< test mode: tangents evolve around a fixed w
};

template <NoiseFamily Noise>
class Integrator {
public:
    Integrator(LatticePtr lat, StepScheme scheme, Noise noise)
        : lat_(std::move(lat)), s_(scheme), noise_(std::move(noise)), xf_(lat_) {
        s_.validate();
        const std::size_t n = lat_->size();
        inv_nu_.resize(static_cast<Eigen::Index>(n));
        inv_zeta_.resize(static_cast<Eigen::Index>(n));
        pred_.setZero(static_cast<Eigen::Index>(n));
        nb_ctrl_ = lat_->band_size(s_.N);
        for (std::size_t i = 0; i < n; ++i) {
            const auto e = static_cast<Eigen::Index>(i);
            const double k2 = lat_->k_sq(i);
            inv_nu_[e] = 1.0 / (1.0 + s_.dt * s_.nu * k2);
            if (i < nb_ctrl_) {
                inv_zeta_[e] = 1.0 / (1.0 + s_.dt * s_.B1 * k2);
                pred_[e] = (s_.B1 - s_.nu) * k2 * inv_zeta_[e];
            } else {
                inv_zeta_[e] = inv_nu_[e];
            }
        }
        if (noise_.band() != s_.N) throw std::invalid_argument("integrator: control band N must equal the noise band");
        if (noise_.band_size() != nb_ctrl_) throw std::invalid_argument("integrator: noise band does not fit the lattice");
    }
    Integrator(const Integrator&) = delete;
    Integrator& operator=(const Integrator&) = delete;

    [[nodiscard]] const StepScheme& scheme() const { return s_; }
    [[nodiscard]] const Noise& noise() const { return noise_; }
    [[nodiscard]] const LatticePtr& lattice_ptr() const { return lat_; }
    [[nodiscard]] std::size_t noise_dim() const { return noise_.band_size(); }
    [[nodiscard]] SpectralTransform& transform() { return xf_; }

    /// B(Kw, w), cached for the most recent w.
    const SpectralField& advection(const SpectralField& w) {
        prepare(w);
        return B_;
    }

    /// Bt(w, xi) = B(Kw, xi) + B(K xi, w).
    SpectralField linearized(const SpectralField& w, const SpectralField& xi) {
        if (!s_.advect) return SpectralField(lat_);
        prepare(w);
        return xf_.linearized(xi);
    }

    /// B(K(w+r), w+r) - B(Kw, w).
    SpectralField advection_difference(const SpectralField& w, const SpectralField& r) {
        if (!s_.advect) return SpectralField(lat_);
        prepare(w);
        return xf_.difference(r);
    }

    SpectralField step_vorticity(const SpectralField& w, const NoiseVector& dW) {
        SpectralField out = w;
        auto& c = out.coeffs();
        c += s_.dt * advection(w).coeffs();
        c += noise_.apply_Q(w, dW).coeffs();
        c.array() *= inv_nu_.array();
        return out;
    }

    SpectralField step_derivative_flow(const SpectralField& w, const SpectralField& J, const NoiseVector& dW) {
        SpectralField out = J;
        auto& c = out.coeffs();
        if (s_.advect) c += s_.dt * linearized(w, J).coeffs();
        c += noise_.apply_DQ(w, J, dW).coeffs();
        c.array() *= inv_nu_.array();
        return out;
    }

    /// Same as the derivative flow plus a control source dt Q(w) v (sign +1 for A, -1 for rho).
    SpectralField step_controlled(const SpectralField& w, const SpectralField& x, const NoiseVector& dW, const NoiseVector& v,
                                  double sign) {
        SpectralField out = x;
        auto& c = out.coeffs();
        if (s_.advect) c += s_.dt * linearized(w, x).coeffs();
        c += noise_.apply_DQ(w, x, dW).coeffs();
        c += (sign * s_.dt) * noise_.apply_Q(w, v).coeffs();
        c.array() *= inv_nu_.array();
        return out;
    }

    SpectralField step_rho(const SpectralField& w, const SpectralField& rho, const NoiseVector& dW, const NoiseVector& v) {
        return step_controlled(w, rho, dW, v, -1.0);
    }

    SpectralField step_malliavin(const SpectralField& w, const SpectralField& A, const NoiseVector& dW, const NoiseVector& v) {
        return step_controlled(w, A, dW, v, +1.0);
    }

    /// zeta update; if F is given it receives the control drift built from the same Bt(w, zeta).
    SpectralField step_zeta(const SpectralField& w, const SpectralField& zeta, const NoiseVector& dW, SpectralField* F = nullptr) {
        SpectralField bz = linearized(w, zeta);
        SpectralField out = zeta;
        auto& c = out.coeffs();
        const auto nb = static_cast<Eigen::Index>(nb_ctrl_);
        const auto n = c.size();
        c.tail(n - nb) += s_.dt * bz.coeffs().tail(n - nb);
        c += noise_.apply_DQ(w, zeta, dW).coeffs();
        c.array() *= inv_zeta_.array();
        if (F) {
            *F = SpectralField(lat_);
            F->coeffs().head(nb) = bz.coeffs().head(nb) + pred_.head(nb).cwiseProduct(zeta.coeffs().head(nb));
        }
        return out;
    }

    /// Discrete control F for the current (w, zeta), with the stiff part at the predictor.
    SpectralField control_drift(const SpectralField& w, const SpectralField& zeta) {
        SpectralField bz = linearized(w, zeta);
        SpectralField F(lat_);
        const auto nb = static_cast<Eigen::Index>(nb_ctrl_);
        F.coeffs().head(nb) = bz.coeffs().head(nb) + pred_.head(nb).cwiseProduct(zeta.coeffs().head(nb));
        return F;
    }

    /// Advance every process present in the state by one step on increment dW.
    /// v_ext drives A and rho when the state carries no zeta.
    void advance(TrajectoryState& st, const NoiseVector& dW, const NoiseVector* v_ext = nullptr) {
        if (st.blown_up) return;
        const SpectralField& w = st.w;
        const double h1 = sobolev_norm_sq(w, 1.0);

        std::optional<NoiseVector> v;
        std::optional<SpectralField> zeta_next;
        if (st.zeta) {
            SpectralField F;
            zeta_next = step_zeta(w, *st.zeta, dW, &F);
            v = noise_.apply_g(w, F);
        } else if (v_ext) {
            v = *v_ext;
        }
        if (st.J_xi) st.J_xi = step_derivative_flow(w, *st.J_xi, dW);
        if (st.malliavin) st.malliavin = v ? step_malliavin(w, *st.malliavin, dW, *v) : step_derivative_flow(w, *st.malliavin, dW);
        if (st.rho) st.rho = v ? step_rho(w, *st.rho, dW, *v) : step_derivative_flow(w, *st.rho, dW);
        if (zeta_next) st.zeta = std::move(*zeta_next);
        if (v) {
            st.acc_stoch_int += v->dot(dW);
            st.acc_control_sq += v->squaredNorm() * s_.dt;
        }
        if (!st.freeze_w) st.w = step_vorticity(w, dW);
        st.acc_h1 += h1 * s_.dt;
        st.t += s_.dt;
        ++st.steps;
        st.blown_up = !healthy(st.w) || (st.J_xi && !healthy(*st.J_xi)) || (st.zeta && !healthy(*st.zeta)) ||
                      (st.rho && !healthy(*st.rho)) || (st.malliavin && !healthy(*st.malliavin));
    }

    static bool healthy(const SpectralField& f) {
        const double n = f.coeffs().norm();
        return std::isfinite(n) && n <= kBlowupThreshold;
    }

private:
    void prepare(const SpectralField& w) {
        if (has_base_ && base_.size() == w.coeffs().size() && base_ == w.coeffs()) return;
        base_ = w.coeffs();
        has_base_ = true;
        if (s_.advect) {
            xf_.load_base(w);
            B_ = xf_.self_transport();
        } else {
            B_ = SpectralField(lat_);
        }
    }

    LatticePtr lat_;
    StepScheme s_;
    Noise noise_;
    SpectralTransform xf_;
    Eigen::VectorXd inv_nu_;
    Eigen::VectorXd inv_zeta_;
    Eigen::VectorXd pred_;
    std::size_t nb_ctrl_ = 0;
    Eigen::VectorXd base_;
    bool has_base_ = false;
    SpectralField B_;
};

}  // namespace vortex
