//! The symplectic cover `P = R^× × M` (chart-locally), 1-homogeneous
//! Hamiltonians and the linear-solve route to the dynamics.
//!
//! Over a chart the cover carries coordinates `(s, x)` with `s ≠ 0` and the
//! 1-homogeneous symplectic form `ω = ds ∧ η + s · dη`. A reduced Hamiltonian
//! `Ĥ` lifts to `H(s, x) = s · Ĥ(x)`, and the Hamiltonian field solving
//! `i_X ω = dH` is computed here by a dense linear solve against the matrix
//! of `ω` — deliberately *not* by the closed contact formulas, so the two
//! routes stay independent and their agreement is a meaningful test. The
//! closed form predicts `X = s R(Ĥ) ∂_s + X^c`, i.e. dropping the fiber
//! component recovers the contact field.
//!
//! The evolution diagnostic quantifies why `Ĥ·R` is not a geometric object:
//! rescaling the trivialization by `s' = g·s` changes the would-be evolution
//! correction term unless `g` is constant.

use nalgebra::{DMatrix, DVector};

use crate::contact::{darboux_dform, darboux_form, reeb_field, ContactModel};
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::geometry::{Chart, ChartPoint};
use crate::jet::jet2;

/// Fiber coordinates closer to zero than this are rejected: the cover is a
/// principal bundle over `s ≠ 0` and the solve degenerates as `s → 0`.
pub const MIN_FIBER: f64 = 1e-8;

/// A point of the symplectic cover: nonzero fiber coordinate over a chart point.
#[derive(Debug, Clone, PartialEq)]
pub struct CoverPoint {
    pub s: f64,
    pub point: ChartPoint,
}

impl CoverPoint {
    pub fn new(s: f64, point: ChartPoint) -> CoverPoint {
        CoverPoint { s, point }
    }
}

fn check_fiber(s: f64) -> Result<()> {
    if s.abs() < MIN_FIBER {
        return Err(Error::FiberNearZero(s.abs()));
    }
    Ok(())
}

/// Matrix of `ω = ds ∧ η + s · dη` in coordinates `(s, chart coords)`:
/// entry `(j, k)` is `ω(e_j, e_k)`.
pub fn omega(chart: &Chart, s: f64, coords: &[f64]) -> Result<DMatrix<f64>> {
    check_fiber(s)?;
    let dim = chart.dim();
    let eta = darboux_form(chart, coords);
    let deta = darboux_dform(chart);
    let mut m = DMatrix::zeros(dim + 1, dim + 1);
    for k in 0..dim {
        m[(0, k + 1)] = eta[k];
        m[(k + 1, 0)] = -eta[k];
        for j in 0..dim {
            m[(j + 1, k + 1)] = s * deta[(j, k)];
        }
    }
    Ok(m)
}

/// Solve `i_X ω = dh` for `X`, with `dh` a covector in `(s, coords)` order.
pub fn hamiltonian_field_from_differential(
    chart: &Chart,
    s: f64,
    coords: &[f64],
    dh: &DVector<f64>,
) -> Result<DVector<f64>> {
    let m = omega(chart, s, coords)?;
    // i_X ω = dh reads Σ_j X^j ω(e_j, e_k) = dh_k, i.e. ωᵀ X = dh
    m.transpose()
        .lu()
        .solve(dh)
        .ok_or(Error::SingularOmega)
}

impl ContactModel {
    /// The 1-homogeneous Hamiltonian `H(s, x, t) = s · Ĥ(x, t)`.
    pub fn homogeneous_hamiltonian(&self, cover: &CoverPoint, t: f64) -> Result<f64> {
        check_fiber(cover.s)?;
        Ok(cover.s * self.eval_hamiltonian(&cover.point, t)?)
    }

    /// Hamiltonian field of `s·Ĥ` on the cover via the linear solve;
    /// components in `(s, chart coords)` order.
    pub fn symplectic_hvf(&self, cover: &CoverPoint, t: f64) -> Result<DVector<f64>> {
        let chart = self.chart(&cover.point.chart)?;
        let jet = self.hamiltonian_jet(&cover.point, t)?;
        let dim = chart.dim();
        // dH = Ĥ ds + s dĤ (spatial part over stored coordinates)
        let mut dh = DVector::zeros(dim + 1);
        dh[0] = jet.value;
        for k in 0..dim {
            dh[k + 1] = cover.s * jet.gradient[k];
        }
        hamiltonian_field_from_differential(chart, cover.s, &cover.point.coords, &dh)
    }

    /// Sup-norm gap between the base components of the linear-solve field and
    /// the closed-form contact field.
    pub fn projection_check(&self, cover: &CoverPoint, t: f64) -> Result<f64> {
        let lifted = self.symplectic_hvf(cover, t)?;
        let contact = self.contact_hvf(&cover.point, t)?;
        let mut worst: f64 = 0.0;
        for (k, c) in contact.iter().enumerate() {
            worst = worst.max((lifted[k + 1] - c).abs());
        }
        Ok(worst)
    }

    /// The trivialization-dependence diagnostic for the would-be evolution
    /// correction `Ĥ·R`.
    ///
    /// Returns the pair of base vectors `(Ĥ·R, Ĥ'·R')` where the primed data
    /// comes from the rescaled trivialization `s' = g·s`: `Ĥ' = Ĥ/g` and `R'`
    /// is the Hamiltonian field of `−s'` obtained by the linear solve. For
    /// constant `g` the two agree; for non-constant `g` they generally do not,
    /// which is the obstruction to `Ĥ·R` being geometric.
    pub fn evolution_diagnostic(
        &self,
        g: &Expr,
        point: &ChartPoint,
        t: f64,
    ) -> Result<(DVector<f64>, DVector<f64>)> {
        let chart = self.chart(&point.chart)?;
        let dim = chart.dim();
        let env = chart.env(&point.coords, t, &self.parameters);
        let g_jet = jet2(g, &chart.coords, &env)?;
        if g_jet.value == 0.0 {
            return Err(Error::Domain(
                "trivialization rescale vanishes at the point".into(),
            ));
        }
        let h_value = self.eval_hamiltonian(point, t)?;

        let reeb = reeb_field(chart);
        let original = DVector::from_iterator(dim, reeb.iter().map(|r| h_value * r));

        // R' solves i_{R'} ω = −ds' = −(g ds + s dg); evaluated at s = 1
        let s = 1.0;
        let mut dh = DVector::zeros(dim + 1);
        dh[0] = -g_jet.value;
        for k in 0..dim {
            dh[k + 1] = -s * g_jet.gradient[k];
        }
        let primed_full = hamiltonian_field_from_differential(chart, s, &point.coords, &dh)?;
        let h_primed = h_value / g_jet.value;
        let primed = DVector::from_iterator(dim, (0..dim).map(|k| h_primed * primed_full[k + 1]));

        Ok((original, primed))
    }
}

/// Symplectic Poisson bracket `{s·F̂, s·Ĝ}_ω = ω(X_F, X_G)` of two homogeneous
/// Hamiltonians, both fields obtained by the linear solve.
pub fn poisson_bracket_homogeneous(
    model: &ContactModel,
    f: &Expr,
    g: &Expr,
    cover: &CoverPoint,
    t: f64,
) -> Result<f64> {
    let chart = model.chart(&cover.point.chart)?;
    let env = chart.env(&cover.point.coords, t, &model.parameters);
    let dim = chart.dim();
    let mut fields = Vec::with_capacity(2);
    for expr in [f, g] {
        let jet = jet2(expr, &chart.coords, &env)?;
        let mut dh = DVector::zeros(dim + 1);
        dh[0] = jet.value;
        for k in 0..dim {
            dh[k + 1] = cover.s * jet.gradient[k];
        }
        fields.push(hamiltonian_field_from_differential(
            chart,
            cover.s,
            &cover.point.coords,
            &dh,
        )?);
    }
    let m = omega(chart, cover.s, &cover.point.coords)?;
    Ok((fields[0].transpose() * m * &fields[1])[(0, 0)])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{parse, Env};
    use crate::geometry::Atlas;
    use std::collections::BTreeMap;

    fn trivial_model(h: &str) -> ContactModel {
        let atlas = Atlas::trivial_jet(1);
        let mut hs = BTreeMap::new();
        hs.insert("U".to_string(), parse(h).unwrap());
        ContactModel::new(atlas, hs, Env::new()).unwrap()
    }

    #[test]
    fn omega_block_pattern_at_origin() {
        let atlas = Atlas::trivial_jet(1);
        let chart = atlas.chart("U").unwrap();
        // order (s, z, q, p) at s=1, p=0: ds∧dz + dq∧dp
        let m = omega(chart, 1.0, &[0.3, 0.7, 0.0]).unwrap();
        assert_eq!(m[(0, 1)], 1.0);
        assert_eq!(m[(1, 0)], -1.0);
        assert_eq!(m[(2, 3)], 1.0);
        assert_eq!(m[(3, 2)], -1.0);
        assert_eq!(m[(0, 2)], 0.0);
        assert_eq!(m[(0, 3)], 0.0);
    }

    #[test]
    fn omega_is_nondegenerate_off_the_zero_section() {
        let atlas = Atlas::trivial_jet(2);
        let chart = atlas.chart("U").unwrap();
        let mut rng = crate::sample::Lcg64::new(17);
        for _ in 0..100 {
            let x = chart.sample_core(&mut rng);
            let s = rng.signed_magnitude(0.5, 2.0);
            let m = omega(chart, s, &x).unwrap();
            assert!(m.determinant().abs() > 1e-6);
        }
    }

    #[test]
    fn omega_matches_mobius_expansion() {
        let atlas = Atlas::mobius();
        let chart = atlas.chart("U").unwrap();
        // stored order (x, pi, z); ω = ds∧(dz − π dx) + s dx∧dπ
        let s = 1.7;
        let pi_val = 0.6;
        let m = omega(chart, s, &[2.0, pi_val, -1.0]).unwrap();
        assert_eq!(m[(0, 1)], -pi_val); // ds∧dx coefficient
        assert_eq!(m[(0, 3)], 1.0); // ds∧dz
        assert_eq!(m[(0, 2)], 0.0);
        assert_eq!(m[(1, 2)], s); // s dx∧dπ
        assert_eq!(m[(2, 1)], -s);
    }

    #[test]
    fn fiber_guard() {
        let atlas = Atlas::trivial_jet(1);
        let chart = atlas.chart("U").unwrap();
        assert!(matches!(
            omega(chart, 1e-9, &[0.0, 0.0, 0.0]),
            Err(Error::FiberNearZero(_))
        ));
    }

    #[test]
    fn homogeneous_hamiltonian_scales() {
        let model = trivial_model("z");
        let p = ChartPoint::new("U", vec![3.0, 0.0, 0.0]);
        let h = model
            .homogeneous_hamiltonian(&CoverPoint::new(2.0, p.clone()), 0.0)
            .unwrap();
        assert_eq!(h, 6.0);
        let h1 = model
            .homogeneous_hamiltonian(&CoverPoint::new(1.0, p.clone()), 0.0)
            .unwrap();
        assert_eq!(h1, 3.0);
        for lambda in [-2.0, 0.5, 3.0] {
            let hl = model
                .homogeneous_hamiltonian(&CoverPoint::new(lambda * 2.0, p.clone()), 0.0)
                .unwrap();
            assert!((hl - lambda * h).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_hamiltonian_has_no_fiber_component() {
        let model = trivial_model("3");
        let cover = CoverPoint::new(1.4, ChartPoint::new("U", vec![0.2, -0.8, 0.5]));
        let x = model.symplectic_hvf(&cover, 0.0).unwrap();
        assert!(x[0].abs() < 1e-14);
        assert!((x[1] + 3.0).abs() < 1e-13);
        assert!(x[2].abs() < 1e-13);
        assert!(x[3].abs() < 1e-13);
    }

    #[test]
    fn linear_z_hamiltonian_lifts_with_fiber_rate_s() {
        let model = trivial_model("z");
        let s = -1.3;
        let cover = CoverPoint::new(s, ChartPoint::new("U", vec![0.9, 0.1, -0.4]));
        let x = model.symplectic_hvf(&cover, 0.0).unwrap();
        // X = s R(Ĥ) ∂_s + X^c with R(z) = 1
        assert!((x[0] - s).abs() < 1e-12);
        assert!((x[1] + 0.9).abs() < 1e-12);
        assert!(x[2].abs() < 1e-12);
        assert!((x[3] + (-0.4)).abs() < 1e-12);
    }

    #[test]
    fn projection_matches_contact_field() {
        let model = trivial_model("z");
        let mut rng = crate::sample::Lcg64::new(23);
        let chart = model.atlas.chart("U").unwrap();
        for _ in 0..50 {
            let coords = chart.sample_core(&mut rng);
            let s = rng.signed_magnitude(0.5, 2.0);
            let cover = CoverPoint::new(s, ChartPoint::new("U", coords));
            let gap = model.projection_check(&cover, 0.0).unwrap();
            assert!(gap < 1e-9, "gap {gap}");
        }
    }

    #[test]
    fn evolution_diagnostic_detects_rescale_dependence() {
        let model = trivial_model("1");
        let point = ChartPoint::new("U", vec![0.0, 1.0, 0.0]);
        // constant rescale: the pair agrees
        let (a, b) = model
            .evolution_diagnostic(&parse("2").unwrap(), &point, 0.0)
            .unwrap();
        assert!((&a - &b).amax() < 1e-12);
        // g = e^q at q = 1, p = 0: the primed vector picks up a q̇... entry
        let (a, b) = model
            .evolution_diagnostic(&parse("exp(q1)").unwrap(), &point, 0.0)
            .unwrap();
        assert_eq!(a.as_slice(), &[1.0, 0.0, 0.0]);
        let gap = (&a - &b).amax();
        assert!(gap > 1e-3, "expected a visible gap, got {gap}");
        assert!((b[0] - 1.0).abs() < 1e-12);
        assert!((b[2] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn evolution_diagnostic_zero_hamiltonian() {
        let model = trivial_model("0");
        let point = ChartPoint::new("U", vec![0.4, 1.0, -0.3]);
        let (a, b) = model
            .evolution_diagnostic(&parse("exp(q1)").unwrap(), &point, 0.0)
            .unwrap();
        assert_eq!(a.amax(), 0.0);
        assert_eq!(b.amax(), 0.0);
    }

    #[test]
    fn poisson_bracket_reduces_to_jacobi_bracket() {
        let model = trivial_model("z"); // model Hamiltonian unused here
        let chart = model.atlas.chart("U").unwrap();
        let f = parse("q1").unwrap();
        let g = parse("p1").unwrap();
        let coords = vec![0.6, -0.2, 1.4];
        let s = 1.9;
        let cover = CoverPoint::new(s, ChartPoint::new("U", coords.clone()));
        let pb = poisson_bracket_homogeneous(&model, &f, &g, &cover, 0.0).unwrap();
        let jb = crate::contact::jacobi_bracket(chart, &f, &g, &coords, 0.0, &Env::new()).unwrap();
        assert!((pb / s - jb).abs() < 1e-12, "pb {pb} jb {jb}");
    }
}
