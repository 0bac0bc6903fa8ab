//! Single-profile radial transport equation, advanced one implicit time
//! step. The unknown is the profile increment Δu over the step; the residual
//! rows are a nonlinear on-axis flux-balance condition, the discretized
//! continuity equation at interior points, and a Dirichlet closure at the
//! outer edge.

use crate::linalg::DenseMatrix;
use crate::problems::{Problem, ProblemError};
use crate::sparsity::{transport_pattern, SparsityPattern};
use crate::Scalar;

/// Linear critical-gradient diffusivity: χ = max{(1/L − 1/L_c)/L, χ_min}
/// with gradient length L = u/|u′|.
#[derive(Debug, Clone, Copy)]
pub struct FluxModel<T> {
    pub l_crit: T,
    pub chi_min: T,
}

impl<T: Scalar> Default for FluxModel<T> {
    fn default() -> Self {
        FluxModel { l_crit: T::of(0.5), chi_min: T::of(0.1) }
    }
}

/// Volume element V′(r) weighting the radial divergence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Geometry {
    /// V′(r) = r; vanishes on axis, which is what forces the nonlinear
    /// on-axis boundary condition.
    #[default]
    Cylindrical,
    /// V′(r) = 1.
    Slab,
}

impl Geometry {
    pub fn volume_element<T: Scalar>(&self, r: T) -> T {
        match self {
            Geometry::Cylindrical => r,
            Geometry::Slab => T::one(),
        }
    }
}

/// Diffusivity of the critical-gradient model. The gradient length is
/// L = u/|u′| (infinite for u′ = 0, which clamps χ to χ_min).
pub fn critical_gradient_chi<T: Scalar>(
    u: T,
    uprime: T,
    model: &FluxModel<T>,
) -> Result<T, ProblemError> {
    if !(u > T::zero()) {
        return Err(ProblemError::NonPositiveProfile);
    }
    if uprime == T::zero() {
        return Ok(model.chi_min);
    }
    let inv_l = uprime.abs() / u;
    Ok(((inv_l - T::one() / model.l_crit) * inv_l).max(model.chi_min))
}

/// Flux Γ = −χ·u′ at a cell face, with face-centered average value and
/// difference-quotient gradient.
pub fn face_flux<T: Scalar>(
    u_left: T,
    u_right: T,
    dr: T,
    model: &FluxModel<T>,
) -> Result<T, ProblemError> {
    let u_face = (u_left + u_right) * T::of(0.5);
    let uprime = (u_right - u_left) / dr;
    let chi = critical_gradient_chi(u_face, uprime, model)?;
    Ok(-chi * uprime)
}

/// Configuration of one implicit transport step on the mesh r_j = j/N,
/// j = 0..N.
#[derive(Debug, Clone)]
pub struct TransportConfig<T> {
    /// Number of mesh cells N; the state vector has N+1 points.
    pub n_cells: usize,
    /// Implicitness θ: 0 explicit, 1 fully implicit, 1/2 time-centered.
    pub theta: T,
    /// Time step in run units.
    pub dt: T,
    pub flux: FluxModel<T>,
    /// Source exponent α in S(r) = 1 − r^α.
    pub source_exponent: T,
    pub geometry: Geometry,
    /// Profile at the old time level, length N+1, positive everywhere.
    pub u_n: Vec<T>,
    /// Dirichlet value held at r = 1.
    pub edge_value: T,
}

impl<T: Scalar> TransportConfig<T> {
    /// Default benchmark configuration: N cells, Δt = 0.1, θ = 1,
    /// cylindrical geometry, and the default initial profile
    /// u(r) = edge + (1 − r²)² with edge value 1.
    pub fn with_defaults(n_cells: usize) -> Self {
        let edge = T::one();
        TransportConfig {
            n_cells,
            theta: T::one(),
            dt: T::of(0.1),
            flux: FluxModel::default(),
            source_exponent: T::of(2.0),
            geometry: Geometry::Cylindrical,
            u_n: polynomial_profile(n_cells, edge, T::one(), 2),
            edge_value: edge,
        }
    }

    pub fn dr(&self) -> T {
        T::one() / T::from_usize(self.n_cells).expect("mesh size fits scalar")
    }

    /// Checks the structural invariants, naming the offending field.
    pub fn validate(&self) -> Result<(), String> {
        if self.n_cells < 4 {
            return Err(format!("n_cells: must be at least 4, got {}", self.n_cells));
        }
        if !(self.dt > T::zero()) {
            return Err("dt: must be positive".into());
        }
        if self.theta < T::zero() || self.theta > T::one() {
            return Err("theta: must lie in [0, 1]".into());
        }
        if self.u_n.len() != self.n_cells + 1 {
            return Err(format!(
                "u_n: profile needs {} points, got {}",
                self.n_cells + 1,
                self.u_n.len()
            ));
        }
        if self.u_n.iter().any(|u| !(*u > T::zero()) || !u.is_finite()) {
            return Err("u_n: profile must be positive and finite everywhere".into());
        }
        if !(self.flux.l_crit > T::zero()) {
            return Err("l_crit: must be positive".into());
        }
        if self.flux.chi_min < T::zero() {
            return Err("chi_min: must be nonnegative".into());
        }
        Ok(())
    }
}

/// Profile u(r) = edge + amp·(1 − r²)^shape on the uniform mesh.
pub fn polynomial_profile<T: Scalar>(n_cells: usize, edge: T, amp: T, shape: u32) -> Vec<T> {
    let n = T::from_usize(n_cells).expect("mesh size fits scalar");
    (0..=n_cells)
        .map(|j| {
            let r = T::from_usize(j).expect("index fits scalar") / n;
            edge + amp * (T::one() - r * r).powi(shape as i32)
        })
        .collect()
}

/// On-axis boundary residual 3·Γ_{1/2} − Γ_{3/2} at the new time level.
/// Depends on Δu₀, Δu₁, Δu₂ only.
pub fn axis_bc_residual<T: Scalar>(
    delta_u: &[T],
    config: &TransportConfig<T>,
) -> Result<T, ProblemError> {
    let dr = config.dr();
    let u0 = config.u_n[0] + delta_u[0];
    let u1 = config.u_n[1] + delta_u[1];
    let u2 = config.u_n[2] + delta_u[2];
    let g_half = face_flux(u0, u1, dr, &config.flux)?;
    let g_three_half = face_flux(u1, u2, dr, &config.flux)?;
    Ok(T::of(3.0) * g_half - g_three_half)
}

/// Residual of the implicit step. Row 0 is the on-axis condition, rows
/// 1..N−1 the θ-blended discrete continuity equation, row N the Dirichlet
/// closure Δu_N − (edge − u_N).
pub fn transport_residual<T: Scalar>(
    delta_u: &[T],
    config: &TransportConfig<T>,
) -> Result<Vec<T>, ProblemError> {
    let n = config.n_cells;
    assert_eq!(delta_u.len(), n + 1, "state length must be n_cells + 1");
    if delta_u.iter().any(|v| !v.is_finite()) {
        return Err(ProblemError::NonFinite);
    }
    let dr = config.dr();
    let theta = config.theta;
    let one_minus_theta = T::one() - theta;
    let u_new: Vec<T> = config.u_n.iter().zip(delta_u).map(|(&u, &d)| u + d).collect();

    // Face fluxes at both time levels. The old-level fluxes are only needed
    // for theta < 1.
    let mut flux_new = Vec::with_capacity(n);
    for j in 0..n {
        flux_new.push(face_flux(u_new[j], u_new[j + 1], dr, &config.flux)?);
    }
    let mut flux_old = Vec::new();
    if one_minus_theta != T::zero() {
        flux_old.reserve(n);
        for j in 0..n {
            flux_old.push(face_flux(config.u_n[j], config.u_n[j + 1], dr, &config.flux)?);
        }
    }

    let nf = T::from_usize(n).expect("mesh size fits scalar");
    let half = T::of(0.5);
    let mut out = vec![T::zero(); n + 1];
    out[0] = axis_bc_residual(delta_u, config)?;
    for j in 1..n {
        let r_j = T::from_usize(j).expect("index fits scalar") / nf;
        let v_center = config.geometry.volume_element(r_j);
        let v_plus = config.geometry.volume_element(r_j + half * dr);
        let v_minus = config.geometry.volume_element(r_j - half * dr);
        let source = T::one() - r_j.powf(config.source_exponent);
        let div_new = (v_plus * flux_new[j] - v_minus * flux_new[j - 1]) / (v_center * dr);
        let mut f = delta_u[j] + theta * (div_new - source) * config.dt;
        if one_minus_theta != T::zero() {
            let div_old = (v_plus * flux_old[j] - v_minus * flux_old[j - 1]) / (v_center * dr);
            f += one_minus_theta * (div_old - source) * config.dt;
        }
        out[j] = f;
    }
    out[n] = delta_u[n] - (config.edge_value - config.u_n[n]);
    if out.iter().any(|v| !v.is_finite()) {
        return Err(ProblemError::NonFinite);
    }
    Ok(out)
}

/// Initial Jacobian for the transport solves: the identity with the first
/// row replaced by the boundary-condition row at marginal diffusivity,
/// (0.3·N, −0.4·N, 0.1·N, 0, …).
pub fn transport_initial_jacobian<T: Scalar>(n_cells: usize) -> DenseMatrix<T> {
    assert!(n_cells >= 4, "transport mesh needs at least 4 cells");
    let mut j = DenseMatrix::identity(n_cells + 1);
    let n = T::from_usize(n_cells).expect("mesh size fits scalar");
    j[(0, 0)] = T::of(0.3) * n;
    j[(0, 1)] = T::of(-0.4) * n;
    j[(0, 2)] = T::of(0.1) * n;
    j
}

/// [`Problem`] wrapper around a validated [`TransportConfig`].
#[derive(Debug, Clone)]
pub struct TransportProblem<T> {
    config: TransportConfig<T>,
}

impl<T: Scalar> TransportProblem<T> {
    /// Panics if the configuration violates its invariants; front ends are
    /// expected to run [`TransportConfig::validate`] first.
    pub fn new(config: TransportConfig<T>) -> Self {
        if let Err(msg) = config.validate() {
            panic!("invalid transport configuration: {msg}");
        }
        TransportProblem { config }
    }

    pub fn config(&self) -> &TransportConfig<T> {
        &self.config
    }

    pub fn initial_jacobian(&self) -> DenseMatrix<T> {
        transport_initial_jacobian(self.config.n_cells)
    }
}

impl<T: Scalar> Problem<T> for TransportProblem<T> {
    fn dimension(&self) -> usize {
        self.config.n_cells + 1
    }

    fn residual(&self, x: &[T]) -> Result<Vec<T>, ProblemError> {
        transport_residual(x, &self.config)
    }

    fn pattern(&self) -> SparsityPattern {
        transport_pattern(self.config.n_cells + 1)
    }

    fn name(&self) -> &'static str {
        "transport"
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> FluxModel<f64> {
        FluxModel::default()
    }

    #[test]
    fn chi_flat_profile_is_minimum() {
        assert_eq!(critical_gradient_chi(1.0, 0.0, &model()).unwrap(), 0.1);
    }

    #[test]
    fn chi_supercritical() {
        // L = 1/4, so (1/L - 1/L_c)/L = (4 - 2)*4 = 8.
        let chi = critical_gradient_chi(1.0, -4.0, &model()).unwrap();
        assert!((chi - 8.0).abs() < 1e-14);
    }

    #[test]
    fn chi_subcritical_clamps() {
        // L = 1, (1 - 2)*1 < chi_min.
        assert_eq!(critical_gradient_chi(1.0, -1.0, &model()).unwrap(), 0.1);
    }

    #[test]
    fn chi_rejects_nonpositive() {
        assert_eq!(
            critical_gradient_chi(0.0, 1.0, &model()),
            Err(ProblemError::NonPositiveProfile)
        );
        assert_eq!(
            critical_gradient_chi(-1.0, 1.0, &model()),
            Err(ProblemError::NonPositiveProfile)
        );
    }

    #[test]
    fn chi_continuous_at_threshold() {
        // inv_l* solves (x - 2) x = chi_min, i.e. the switch point.
        let inv_l_star = 1.0 + (1.0 + 0.1f64).sqrt();
        let u = 1.0;
        let eps = 1e-9;
        let below = critical_gradient_chi(u, -(inv_l_star - eps), &model()).unwrap();
        let above = critical_gradient_chi(u, -(inv_l_star + eps), &model()).unwrap();
        assert!((below - above).abs() < 1e-7);
    }

    #[test]
    fn flux_zero_gradient() {
        assert_eq!(face_flux(1.0, 1.0, 0.125, &model()).unwrap(), 0.0);
    }

    #[test]
    fn flux_supercritical_face() {
        // u_face = 1, u' = -4, chi = 8, flux = -8*(-4) = 32.
        let g = face_flux(1.25, 0.75, 0.125, &model()).unwrap();
        assert!((g - 32.0).abs() < 1e-12);
    }

    #[test]
    fn flux_subcritical_face() {
        // u_face = 1, u' = -1, chi = chi_min, flux = 0.1.
        let g = face_flux(1.5, 0.5, 1.0, &model()).unwrap();
        assert!((g - 0.1).abs() < 1e-14);
    }

    #[test]
    fn residual_time_term_only_when_dt_zero() {
        let mut cfg = TransportConfig::<f64>::with_defaults(6);
        cfg.dt = 0.0;
        // dt = 0 is outside the validated range for solves, but the residual
        // itself is well defined and isolates the time term.
        let du: Vec<f64> = (0..=6).map(|j| 0.01 * j as f64).collect();
        let f = transport_residual(&du, &cfg).unwrap();
        for j in 1..6 {
            assert_eq!(f[j], du[j]);
        }
    }

    #[test]
    fn residual_linear_in_dt_at_zero_increment() {
        let mut cfg = TransportConfig::<f64>::with_defaults(8);
        let du = vec![0.0; 9];
        cfg.dt = 0.1;
        let f1 = transport_residual(&du, &cfg).unwrap();
        cfg.dt = 0.2;
        let f2 = transport_residual(&du, &cfg).unwrap();
        for j in 1..8 {
            assert!((f2[j] - 2.0 * f1[j]).abs() < 1e-14 * (1.0 + f1[j].abs()));
        }
    }

    #[test]
    fn residual_interior_term_by_term() {
        // Hand-assembled F_1 for N = 4, theta = 1, cylindrical geometry.
        let n = 4;
        let mut cfg = TransportConfig::<f64>::with_defaults(n);
        cfg.u_n = vec![2.0, 1.9, 1.6, 1.3, 1.0];
        let du = vec![0.05, 0.04, 0.03, 0.02, 0.0];
        let f = transport_residual(&du, &cfg).unwrap();

        let dr = 0.25;
        let u = |j: usize| cfg.u_n[j] + du[j];
        let gamma = |l: usize, r: usize| {
            let uf = 0.5 * (u(l) + u(r));
            let up = (u(r) - u(l)) / dr;
            let inv_l = up.abs() / uf;
            let chi = ((inv_l - 2.0) * inv_l).max(0.1);
            -chi * up
        };
        let r1 = 0.25;
        let div = ((r1 + dr / 2.0) * gamma(1, 2) - (r1 - dr / 2.0) * gamma(0, 1)) / (r1 * dr);
        let source = 1.0 - r1 * r1;
        let expected = du[1] + (div - source) * cfg.dt;
        assert!((f[1] - expected).abs() < 1e-14, "f1 = {}, expected = {}", f[1], expected);
    }

    #[test]
    fn residual_edge_row_is_dirichlet() {
        let cfg = TransportConfig::<f64>::with_defaults(5);
        let mut du = vec![0.0; 6];
        du[5] = 0.25;
        let f = transport_residual(&du, &cfg).unwrap();
        // edge_value equals u_n[N] for the default profile, so row N is du[N].
        assert_eq!(f[5], 0.25);
    }

    #[test]
    fn axis_bc_uniform_profile_vanishes() {
        let mut cfg = TransportConfig::<f64>::with_defaults(4);
        cfg.u_n = vec![1.0; 5];
        let f = axis_bc_residual(&[0.0; 5], &cfg).unwrap();
        assert_eq!(f, 0.0);
    }

    #[test]
    fn axis_bc_ignores_far_cells() {
        let cfg = TransportConfig::<f64>::with_defaults(5);
        let mut du = vec![0.0; 6];
        let base = axis_bc_residual(&du, &cfg).unwrap();
        du[3] = 0.7;
        du[4] = -0.2;
        let perturbed = axis_bc_residual(&du, &cfg).unwrap();
        assert_eq!(base.to_bits(), perturbed.to_bits());
    }

    #[test]
    fn axis_bc_balanced_fluxes_vanish() {
        // Bisect for u2 so that the flux at face 3/2 is three times the flux
        // at face 1/2; the residual must then be zero.
        let mut cfg = TransportConfig::<f64>::with_defaults(4);
        cfg.u_n = vec![1.0; 5];
        let dr = cfg.dr();
        let u0 = 2.0;
        let u1 = 1.9;
        let target = 3.0 * face_flux(u0, u1, dr, &cfg.flux).unwrap();
        let g = |u2: f64| face_flux(u1, u2, dr, &cfg.flux).unwrap() - target;
        let (mut lo, mut hi) = (0.2, 1.9);
        assert!(g(lo) > 0.0 && g(hi) < 0.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if g(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let u2 = 0.5 * (lo + hi);
        let du = [u0 - 1.0, u1 - 1.0, u2 - 1.0, 0.0, 0.0];
        let f = axis_bc_residual(&du, &cfg).unwrap();
        assert!(f.abs() < 1e-10, "f = {f}");
    }

    #[test]
    fn initial_jacobian_rows() {
        let j = transport_initial_jacobian::<f64>(10);
        assert_eq!(j[(0, 0)], 3.0);
        assert_eq!(j[(0, 1)], -4.0);
        assert_eq!(j[(0, 2)], 1.0);
        for c in 3..11 {
            assert_eq!(j[(0, c)], 0.0);
        }
        for c in 0..11 {
            assert_eq!(j[(5, c)], if c == 5 { 1.0 } else { 0.0 });
        }
    }

    #[test]
    fn initial_jacobian_matches_pattern_row0() {
        let j = transport_initial_jacobian::<f64>(8);
        let p = transport_pattern(9);
        for c in 0..9 {
            if j[(0, c)] != 0.0 {
                assert!(p.contains(0, c));
            }
        }
    }

    #[test]
    fn validate_rejects_bad_configs() {
        let mut cfg = TransportConfig::<f64>::with_defaults(10);
        cfg.n_cells = 3;
        assert!(cfg.validate().unwrap_err().starts_with("n_cells"));
        let mut cfg = TransportConfig::<f64>::with_defaults(10);
        cfg.theta = 1.5;
        assert!(cfg.validate().unwrap_err().starts_with("theta"));
        let mut cfg = TransportConfig::<f64>::with_defaults(10);
        cfg.u_n[3] = -0.5;
        assert!(cfg.validate().unwrap_err().starts_with("u_n"));
    }

    #[test]
    fn residual_reports_unphysical_profiles() {
        let cfg = TransportConfig::<f64>::with_defaults(4);
        let mut du = vec![0.0; 5];
        du[2] = -50.0;
        assert_eq!(transport_residual(&du, &cfg), Err(ProblemError::NonPositiveProfile));
        du[2] = f64::NAN;
        assert_eq!(transport_residual(&du, &cfg), Err(ProblemError::NonFinite));
    }
}
