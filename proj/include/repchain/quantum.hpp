#pragma once

// Two-qubit state algebra for repeater simulations: Bell states, the noise
// channels acting on stored and transmitted qubits, entanglement swapping and
// DEJMPS purification. Nothing in here knows about time or topology.
//
// Basis convention: computational basis |00>, |01>, |10>, |11> with qubit A
// as the most significant bit. Bell coefficients are labelled by
// (phase-flip, bit-flip): lam00 <-> Phi+, lam10 <-> Phi-, lam01 <-> Psi+,
// lam11 <-> Psi-.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <stdexcept>
#include <string>
#include <utility>

#include "repchain/random.hpp"

namespace repchain {

using Complex = std::complex<double>;
using Matrix2 = Eigen::Matrix<Complex, 2, 2>;
using Matrix4 = Eigen::Matrix<Complex, 4, 4>;
using Vector4 = Eigen::Matrix<Complex, 4, 1>;
using Matrix16 = Eigen::Matrix<Complex, 16, 16>;

enum class Qubit { A = 0, B = 1 };

enum class Pauli { I, X, Y, Z };

/// Bell-basis measurement outcomes, in the order Phi+, Phi-, Psi+, Psi-.
enum class BellOutcome { PhiPlus = 0, PhiMinus = 1, PsiPlus = 2, PsiMinus = 3 };

struct BellCoeffs {
    double lam00 = 1.0;  // Phi+
    double lam10 = 0.0;  // Phi-
    double lam01 = 0.0;  // Psi+
    double lam11 = 0.0;  // Psi-

    /// Coefficients in BellOutcome order.
    std::array<double, 4> as_array() const { return {lam00, lam10, lam01, lam11}; }
    static BellCoeffs from_array(const std::array<double, 4>& a) { return {a[0], a[1], a[2], a[3]}; }
    double sum() const { return lam00 + lam10 + lam01 + lam11; }
};

namespace detail {

inline Matrix2 pauli_matrix(Pauli p) {
    Matrix2 m = Matrix2::Zero();
    switch (p) {
        case Pauli::I: m(0, 0) = 1.0; m(1, 1) = 1.0; break;
        case Pauli::X: m(0, 1) = 1.0; m(1, 0) = 1.0; break;
        case Pauli::Y: m(0, 1) = Complex(0, -1); m(1, 0) = Complex(0, 1); break;
        case Pauli::Z: m(0, 0) = 1.0; m(1, 1) = -1.0; break;
    }
    return m;
}

inline Matrix4 kron(const Matrix2& a, const Matrix2& b) {
    Matrix4 out;
    for (int i = 0; i < 2; ++i) {
        for (int j = 0; j < 2; ++j) {
            out.block<2, 2>(2 * i, 2 * j) = a(i, j) * b;
        }
    }
    return out;
}

/// Operator acting as `op` on qubit q and identity on the other.
inline Matrix4 embed(const Matrix2& op, Qubit q) {
    const Matrix2 id = Matrix2::Identity();
    return q == Qubit::A ? kron(op, id) : kron(id, op);
}

inline void check_probability(double p, const char* what) {
    if (!(p >= 0.0 && p <= 1.0)) {
        throw std::invalid_argument(std::string(what) + " must lie in [0, 1]");
    }
}

inline Matrix4 hermitian_part(const Matrix4& m) { return 0.5 * (m + m.adjoint()); }

}  // namespace detail

/// Bell state vectors in BellOutcome order.
inline const std::array<Vector4, 4>& bell_vectors() {
    static const std::array<Vector4, 4> vectors = [] {
        const double s = 1.0 / std::sqrt(2.0);
        std::array<Vector4, 4> v;
        for (auto& x : v) x.setZero();
        v[0](0) = s; v[0](3) = s;   // Phi+
        v[1](0) = s; v[1](3) = -s;  // Phi-
        v[2](1) = s; v[2](2) = s;   // Psi+
        v[3](1) = s; v[3](2) = -s;  // Psi-
        return v;
    }();
    return vectors;
}

inline Matrix4 bell_projector(BellOutcome b) {
    const Vector4& v = bell_vectors()[static_cast<int>(b)];
    return v * v.adjoint();
}

/// Density matrix of one entangled pair.
class TwoQubitState {
public:
    /// Pure Phi+.
    TwoQubitState() : rho_(bell_projector(BellOutcome::PhiPlus)) {}

    /// Wraps a matrix without validation; use `from_matrix` for checked input.
    explicit TwoQubitState(Matrix4 rho) : rho_(std::move(rho)) {}

    static TwoQubitState from_matrix(const Matrix4& rho, double tol = 1e-9) {
        TwoQubitState s(rho);
        if (!s.is_valid(tol)) {
            throw std::invalid_argument("matrix is not a valid two-qubit density matrix");
        }
        return s;
    }

    static TwoQubitState bell_diagonal(const BellCoeffs& c) {
        const auto a = c.as_array();
        Matrix4 rho = Matrix4::Zero();
        for (int i = 0; i < 4; ++i) {
            rho += a[i] * bell_projector(static_cast<BellOutcome>(i));
        }
        return TwoQubitState(rho);
    }

    static TwoQubitState maximally_mixed() { return TwoQubitState(Matrix4::Identity() * 0.25); }

    const Matrix4& matrix() const { return rho_; }

    double trace() const { return rho_.trace().real(); }

    double hermiticity_error() const { return (rho_ - rho_.adjoint()).cwiseAbs().maxCoeff(); }

    double min_eigenvalue() const {
        Eigen::SelfAdjointEigenSolver<Matrix4> solver(detail::hermitian_part(rho_), Eigen::EigenvaluesOnly);
        return solver.eigenvalues().minCoeff();
    }

    bool is_valid(double tol = 1e-9) const {
        return hermiticity_error() <= tol && std::abs(trace() - 1.0) <= tol && min_eigenvalue() >= -tol;
    }

    /// rho <- (rho + rho^dagger) / 2
    void symmetrize() { rho_ = detail::hermitian_part(rho_); }

private:
    Matrix4 rho_;
};

inline TwoQubitState symmetrized(Matrix4 rho) {
    TwoQubitState s(std::move(rho));
    s.symmetrize();
    return s;
}

/// Werner-type initial pair: F on Phi+, (1-F)/3 on each other Bell state.
inline TwoQubitState make_initial_state(double f_init) {
    detail::check_probability(f_init, "initial fidelity");
    const double rest = (1.0 - f_init) / 3.0;
    return TwoQubitState::bell_diagonal({f_init, rest, rest, rest});
}

/// P_q rho P_q^dagger for a single-qubit Pauli.
inline Matrix4 conjugate_by_pauli(const Matrix4& rho, Qubit q, Pauli p) {
    const Matrix4 op = detail::embed(detail::pauli_matrix(p), q);
    return op * rho * op.adjoint();
}

/// Phase-flip weight accumulated after storing a qubit for `t` seconds.
inline double dephasing_weight(double t, double t_dp) {
    if (t < 0.0) throw std::invalid_argument("dephasing: negative storage time");
    if (!(t_dp > 0.0)) throw std::invalid_argument("dephasing: dephasing time must be positive");
    return -0.5 * std::expm1(-t / t_dp);
}

/// Memory dephasing of one qubit over `dt` seconds.
inline TwoQubitState apply_dephasing(const TwoQubitState& state, Qubit q, double dt, double t_dp) {
    const double lambda = dephasing_weight(dt, t_dp);
    // Z conjugation flips the sign of coherences between states that differ on q.
    const double damp = 1.0 - 2.0 * lambda;
    const int mask = q == Qubit::A ? 2 : 1;
    Matrix4 rho = state.matrix();
    for (int i = 0; i < 4; ++i) {
        for (int j = 0; j < 4; ++j) {
            if (((i ^ j) & mask) != 0) rho(i, j) *= damp;
        }
    }
    return symmetrized(std::move(rho));
}

/// Y-noise from misaligned setups.
inline TwoQubitState apply_misalignment(const TwoQubitState& state, Qubit q, double e_m) {
    detail::check_probability(e_m, "misalignment error");
    const Matrix4& rho = state.matrix();
    return symmetrized((1.0 - e_m) * rho + e_m * conjugate_by_pauli(rho, q, Pauli::Y));
}

/// Reduced state of the qubit that is not `traced`.
inline Matrix2 partial_trace(const Matrix4& rho, Qubit traced) {
    Matrix2 out = Matrix2::Zero();
    for (int i = 0; i < 2; ++i) {
        for (int j = 0; j < 2; ++j) {
            for (int k = 0; k < 2; ++k) {
                if (traced == Qubit::A) {
                    out(i, j) += rho(2 * k + i, 2 * k + j);
                } else {
                    out(i, j) += rho(2 * i + k, 2 * j + k);
                }
            }
        }
    }
    return out;
}

struct DarkCountParameters {
    double eta_eff;  // probability that the detector clicks in a window
    double alpha;    // probability that a click is a real detection
};

enum class DarkCountModel {
    Printed,      // eta_eff = 1 - (1 - eta)(1 - p_d^2)
    TwoDetector,  // eta_eff = 1 - (1 - eta)(1 - p_d)^2, experimental
};

inline DarkCountParameters dark_count_parameters(double eta, double p_d,
                                                 DarkCountModel model = DarkCountModel::Printed) {
    detail::check_probability(eta, "eta");
    detail::check_probability(p_d, "dark count probability");
    // 1 - (1 - eta)(1 - q), expanded to avoid cancellation when eta and q are tiny.
    const double q = model == DarkCountModel::Printed ? p_d * p_d : p_d * (2.0 - p_d);
    const double eta_eff = eta + (1.0 - eta) * q;
    if (!(eta_eff > 0.0)) {
        throw std::invalid_argument("dark_count_parameters: detector never clicks");
    }
    return {eta_eff, eta * (1.0 - p_d) / eta_eff};
}

/// alpha * rho + (1 - alpha)/2 (tr_q rho) (x) 1_q
inline TwoQubitState apply_dark_count_mix(const TwoQubitState& state, Qubit q, double alpha) {
    detail::check_probability(alpha, "alpha");
    const Matrix4& rho = state.matrix();
    const Matrix2 other = partial_trace(rho, q);
    const Matrix2 half_id = 0.5 * Matrix2::Identity();
    const Matrix4 mixed = q == Qubit::A ? detail::kron(half_id, other) : detail::kron(other, half_id);
    return symmetrized(alpha * rho + (1.0 - alpha) * mixed);
}

inline BellCoeffs bell_diagonal_coeffs(const TwoQubitState& state) {
    std::array<double, 4> a{};
    const auto& v = bell_vectors();
    for (int i = 0; i < 4; ++i) {
        a[i] = (v[i].adjoint() * state.matrix() * v[i])(0, 0).real();
    }
    return BellCoeffs::from_array(a);
}

/// Largest off-diagonal magnitude of rho in the Bell basis.
inline double bell_offdiagonal_norm(const TwoQubitState& state) {
    const auto& v = bell_vectors();
    double worst = 0.0;
    for (int i = 0; i < 4; ++i) {
        for (int j = 0; j < 4; ++j) {
            if (i == j) continue;
            worst = std::max(worst, std::abs((v[i].adjoint() * state.matrix() * v[j])(0, 0)));
        }
    }
    return worst;
}

struct ErrorRates {
    double e_x;  // X (x) X outcomes anticorrelated
    double e_z;  // Z (x) Z outcomes anticorrelated
};

inline ErrorRates error_rates(const TwoQubitState& state) {
    const Matrix4& rho = state.matrix();
    const double e_z = rho(1, 1).real() + rho(2, 2).real();
    const Matrix2 x = detail::pauli_matrix(Pauli::X);
    const double xx = (rho * detail::kron(x, x)).trace().real();
    return {0.5 * (1.0 - xx), e_z};
}

// ---------------------------------------------------------------------------
// Entanglement swapping

/// Unnormalized post-measurement states of the outer qubits for each Bell
/// outcome, before Pauli correction. Entry probabilities sum to one.
struct SwapBranches {
    std::array<Matrix4, 4> unnormalized;
    std::array<double, 4> probability;
};

/// Depolarize the two inner qubits with ideality `lambda_bsm`, then project
/// them onto each Bell state. The inner qubits are left.B and right.A.
inline SwapBranches bell_swap_branches(const TwoQubitState& left, const TwoQubitState& right,
                                       double lambda_bsm) {
    detail::check_probability(lambda_bsm, "Bell measurement ideality");
    const Matrix4& l = left.matrix();
    const Matrix4& r = right.matrix();
    // Depolarized part: (tr_inner rho) (x) 1/4 projects to a quarter of the outer marginals.
    const Matrix4 outer_marginals = detail::kron(partial_trace(l, Qubit::B), partial_trace(r, Qubit::A));

    SwapBranches out;
    const auto& bells = bell_vectors();
    for (int m = 0; m < 4; ++m) {
        const Vector4& beta = bells[m];  // indexed by (x, y) = (left.B, right.A)
        Matrix4 acc = Matrix4::Zero();
        for (int a = 0; a < 2; ++a) {
            for (int b = 0; b < 2; ++b) {
                for (int ap = 0; ap < 2; ++ap) {
                    for (int bp = 0; bp < 2; ++bp) {
                        Complex sum = 0.0;
                        for (int x = 0; x < 2; ++x) {
                            for (int y = 0; y < 2; ++y) {
                                const Complex cb = std::conj(beta(2 * x + y));
                                if (cb == Complex(0.0)) continue;
                                for (int xp = 0; xp < 2; ++xp) {
                                    for (int yp = 0; yp < 2; ++yp) {
                                        const Complex bk = beta(2 * xp + yp);
                                        if (bk == Complex(0.0)) continue;
                                        sum += cb * bk * l(2 * a + x, 2 * ap + xp) * r(2 * y + b, 2 * yp + bp);
                                    }
                                }
                            }
                        }
                        acc(2 * a + b, 2 * ap + bp) = sum;
                    }
                }
            }
        }
        out.unnormalized[m] = lambda_bsm * acc + (1.0 - lambda_bsm) * 0.25 * outer_marginals;
        out.probability[m] = std::max(0.0, out.unnormalized[m].trace().real());
    }
    return out;
}

/// Pauli applied to the outer B qubit after outcome `m` so perfect inputs give Phi+.
inline Pauli swap_correction(BellOutcome m) {
    switch (m) {
        case BellOutcome::PhiPlus: return Pauli::I;
        case BellOutcome::PhiMinus: return Pauli::Z;
        case BellOutcome::PsiPlus: return Pauli::X;
        case BellOutcome::PsiMinus: return Pauli::Y;
    }
    return Pauli::I;
}

/// Corrected, normalized outer state for a fixed measurement outcome.
inline TwoQubitState bell_swap_outcome(const SwapBranches& branches, BellOutcome m) {
    const int i = static_cast<int>(m);
    const double p = branches.probability[i];
    if (!(p > 0.0)) {
        throw std::domain_error("bell_swap_outcome: outcome has zero probability");
    }
    return symmetrized(conjugate_by_pauli(branches.unnormalized[i], Qubit::B, swap_correction(m)) / p);
}

/// Noisy Bell measurement on left.B and right.A; returns the state of left.A
/// and right.B in the Phi+ reference frame. Consumes one uniform variate.
inline TwoQubitState bell_swap(const TwoQubitState& left, const TwoQubitState& right, double lambda_bsm,
                               Rng& rng) {
    const SwapBranches branches = bell_swap_branches(left, right, lambda_bsm);
    const double u = rng.uniform();
    double acc = 0.0;
    int chosen = 3;
    for (int m = 0; m < 4; ++m) {
        acc += branches.probability[m];
        if (u < acc && branches.probability[m] > 0.0) {
            chosen = m;
            break;
        }
    }
    while (branches.probability[chosen] <= 0.0) --chosen;
    return bell_swap_outcome(branches, static_cast<BellOutcome>(chosen));
}

// ---------------------------------------------------------------------------
// DEJMPS purification

struct PurificationOutcome {
    bool success = false;
    double success_prob = 0.0;
    TwoQubitState post_state;  // kept pair conditioned on success
};

namespace detail {

/// Rotations and bilateral CNOT on qubit order (A1, B1, A2, B2).
inline const Matrix16& dejmps_unitary() {
    static const Matrix16 u = [] {
        const double s = 1.0 / std::sqrt(2.0);
        const Matrix2 id = Matrix2::Identity();
        const Matrix2 x = pauli_matrix(Pauli::X);
        const Matrix2 rot_a = s * (id - Complex(0, 1) * x);  // sqrt(-iX)
        const Matrix2 rot_b = s * (id + Complex(0, 1) * x);  // sqrt(iX)
        const Matrix4 pair_rot = kron(rot_a, rot_b);
        Matrix16 local = Matrix16::Zero();
        for (int i = 0; i < 4; ++i) {
            for (int j = 0; j < 4; ++j) {
                local.block<4, 4>(4 * i, 4 * j) = pair_rot(i, j) * pair_rot;
            }
        }
        Matrix16 cnots = Matrix16::Zero();
        for (int in = 0; in < 16; ++in) {
            const int a1 = (in >> 3) & 1, b1 = (in >> 2) & 1, a2 = (in >> 1) & 1, b2 = in & 1;
            const int out = (a1 << 3) | (b1 << 2) | ((a2 ^ a1) << 1) | (b2 ^ b1);
            cnots(out, in) = 1.0;
        }
        return Matrix16(cnots * local);
    }();
    return u;
}

}  // namespace detail

/// Success probability and normalized kept pair for one DEJMPS round;
/// `kept` is the pair that survives, `measured` is consumed.
inline std::pair<double, TwoQubitState> dejmps_success_branch(const TwoQubitState& kept,
                                                               const TwoQubitState& measured) {
    const Matrix4& k = kept.matrix();
    const Matrix4& m = measured.matrix();
    Matrix16 rho;
    for (int i = 0; i < 4; ++i) {
        for (int j = 0; j < 4; ++j) {
            rho.block<4, 4>(4 * i, 4 * j) = k(i, j) * m;
        }
    }
    const Matrix16& u = detail::dejmps_unitary();
    const Matrix16 evolved = u * rho * u.adjoint();
    // Keep the branches where the second pair reads 00 or 11.
    Matrix4 out = Matrix4::Zero();
    for (int i = 0; i < 4; ++i) {
        for (int j = 0; j < 4; ++j) {
            out(i, j) = evolved(4 * i + 0, 4 * j + 0) + evolved(4 * i + 3, 4 * j + 3);
        }
    }
    const double p = std::clamp(out.trace().real(), 0.0, 1.0);
    if (!(p > 0.0)) {
        return {0.0, kept};
    }
    return {p, symmetrized(out / p)};
}

/// One DEJMPS round with a sampled success flag. Consumes one uniform variate.
inline PurificationOutcome dejmps_purify(const TwoQubitState& kept, const TwoQubitState& measured, Rng& rng) {
    auto [p, post] = dejmps_success_branch(kept, measured);
    PurificationOutcome out;
    out.success_prob = p;
    out.success = rng.uniform() < p;
    out.post_state = std::move(post);
    return out;
}

}  // namespace repchain
