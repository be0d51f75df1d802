//! Atlases of Darboux charts, transition maps and contact-form cocycles.
//!
//! A contact manifold of dimension `2n+1` is presented as a collection of
//! charts whose coordinates carry fixed Darboux roles `z, q_1..q_n, p_1..p_n`
//! (the local contact form is `η = dz − p_i dq^i` in role values), glued by
//! transition maps together with a nonvanishing scalar cocycle `c` satisfying
//! `η_target = c · η_source` on the overlap. A chart may store a coordinate
//! with a sign flip relative to its Darboux role (`signs`); the projectivized
//! cotangent charts use this to keep the printed projective coordinates.
//!
//! Builtin models:
//! * trivial jet space `J¹(R^n, R)` — one global chart, no gluing;
//! * the jet bundle of the dual Möbius line bundle over the circle — one
//!   chart with a sign-reversing self-gluing, the minimal example without a
//!   global contact form;
//! * projectivized cotangent bundles `P(T*R^{n+1})` — `n+1` charts with
//!   momentum-ratio transitions and cocycle `1/p^k_l`.

use std::collections::BTreeSet;
use std::f64::consts::{PI, TAU};
use std::fmt;

use nalgebra::DMatrix;
use serde::{de, Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::expr::{is_identifier, Env, Expr};
use crate::jet::jet2;
use crate::sample::Lcg64;

/// Default hysteresis margin for chart switching, in coordinate units.
pub const DEFAULT_MARGIN: f64 = 0.1;

/// Gap keeping projective overlap boxes away from the vanishing momentum.
pub const PROJECTIVE_GAP: f64 = 0.1;

/// Half-width of the bounded projective overlap boxes.
pub const PROJECTIVE_BOUND: f64 = 3.0;

/// Coordinates with unbounded domains are sampled from `[-SAMPLE_CLAMP, SAMPLE_CLAMP]`.
pub const SAMPLE_CLAMP: f64 = 2.0;

/// An open interval, possibly unbounded on either side.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Interval {
        Interval { lo, hi }
    }

    pub fn full() -> Interval {
        Interval {
            lo: f64::NEG_INFINITY,
            hi: f64::INFINITY,
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        x > self.lo && x < self.hi
    }

    /// Shrink every bounded side by `margin`.
    pub fn shrunk(&self, margin: f64) -> Interval {
        Interval {
            lo: if self.lo.is_finite() {
                self.lo + margin
            } else {
                self.lo
            },
            hi: if self.hi.is_finite() {
                self.hi - margin
            } else {
                self.hi
            },
        }
    }

    /// Bounded range used for drawing sample points: infinite sides clamp to
    /// `±SAMPLE_CLAMP`.
    pub fn sample_range(&self) -> (f64, f64) {
        let lo = if self.lo.is_finite() {
            self.lo
        } else {
            -SAMPLE_CLAMP
        };
        let hi = if self.hi.is_finite() {
            self.hi
        } else {
            SAMPLE_CLAMP
        };
        (lo, hi.max(lo))
    }
}

impl Serialize for Interval {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let lo = if self.lo.is_finite() {
            Some(self.lo)
        } else {
            None
        };
        let hi = if self.hi.is_finite() {
            Some(self.hi)
        } else {
            None
        };
        (lo, hi).serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Interval {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let (lo, hi) = <(Option<f64>, Option<f64>)>::deserialize(deserializer)?;
        let lo = lo.unwrap_or(f64::NEG_INFINITY);
        let hi = hi.unwrap_or(f64::INFINITY);
        if lo >= hi {
            return Err(de::Error::custom(format!(
                "empty interval [{lo}, {hi}]"
            )));
        }
        Ok(Interval { lo, hi })
    }
}

/// Darboux role of a stored coordinate. Indices are 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoordRole {
    Z,
    Q(usize),
    P(usize),
}

impl fmt::Display for CoordRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CoordRole::Z => write!(f, "z"),
            CoordRole::Q(i) => write!(f, "q{i}"),
            CoordRole::P(i) => write!(f, "p{i}"),
        }
    }
}

impl std::str::FromStr for CoordRole {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        if s == "z" {
            return Ok(CoordRole::Z);
        }
        let (kind, rest) = s.split_at(1);
        let index: usize = rest
            .parse()
            .map_err(|_| format!("bad coordinate role '{s}'"))?;
        if index == 0 {
            return Err(format!("coordinate role indices are 1-based: '{s}'"));
        }
        match kind {
            "q" => Ok(CoordRole::Q(index)),
            "p" => Ok(CoordRole::P(index)),
            _ => Err(format!("bad coordinate role '{s}'")),
        }
    }
}

impl Serialize for CoordRole {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for CoordRole {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        text.parse().map_err(de::Error::custom)
    }
}

/// A single Darboux chart.
///
/// `coords` lists the stored coordinate names in order; `roles[j]` assigns
/// the Darboux role of slot `j` and `signs[j] ∈ {+1, -1}` relates the stored
/// value to the Darboux value (`role value = signs[j] * stored value`).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Chart {
    pub id: String,
    pub n: usize,
    pub coords: Vec<String>,
    pub roles: Vec<CoordRole>,
    #[serde(default)]
    pub signs: Vec<f64>,
    pub domain: Vec<Interval>,
    #[serde(default = "default_margin")]
    pub margin: f64,
}

fn default_margin() -> f64 {
    DEFAULT_MARGIN
}

impl Chart {
    pub fn dim(&self) -> usize {
        2 * self.n + 1
    }

    pub fn validate(&self) -> Result<()> {
        let dim = self.dim();
        if self.coords.len() != dim || self.roles.len() != dim || self.domain.len() != dim {
            return Err(Error::Model(format!(
                "chart '{}': expected {dim} coordinates, roles and domain intervals",
                self.id
            )));
        }
        if !self.signs.is_empty() && self.signs.len() != dim {
            return Err(Error::Model(format!(
                "chart '{}': signs must be empty or of length {dim}",
                self.id
            )));
        }
        for s in &self.signs {
            if *s != 1.0 && *s != -1.0 {
                return Err(Error::Model(format!(
                    "chart '{}': signs must be +1 or -1",
                    self.id
                )));
            }
        }
        if self.margin <= 0.0 {
            return Err(Error::Model(format!(
                "chart '{}': margin must be positive",
                self.id
            )));
        }
        let mut seen = BTreeSet::new();
        for name in &self.coords {
            if !is_identifier(name) {
                return Err(Error::Model(format!(
                    "chart '{}': coordinate name '{name}' is not an identifier",
                    self.id
                )));
            }
            if !seen.insert(name.clone()) {
                return Err(Error::Model(format!(
                    "chart '{}': duplicate coordinate name '{name}'",
                    self.id
                )));
            }
        }
        // roles must be a bijection onto {z, q_1..q_n, p_1..p_n}
        let mut z_count = 0;
        let mut q_seen = vec![false; self.n];
        let mut p_seen = vec![false; self.n];
        for role in &self.roles {
            match role {
                CoordRole::Z => z_count += 1,
                CoordRole::Q(i) if (1..=self.n).contains(i) && !q_seen[i - 1] => {
                    q_seen[i - 1] = true
                }
                CoordRole::P(i) if (1..=self.n).contains(i) && !p_seen[i - 1] => {
                    p_seen[i - 1] = true
                }
                other => {
                    return Err(Error::Model(format!(
                        "chart '{}': role '{other}' repeated or out of range",
                        self.id
                    )));
                }
            }
        }
        if z_count != 1 || !q_seen.iter().all(|b| *b) || !p_seen.iter().all(|b| *b) {
            return Err(Error::Model(format!(
                "chart '{}': roles are not a bijection onto z, q_i, p_i",
                self.id
            )));
        }
        for w in &self.domain {
            if w.lo >= w.hi {
                return Err(Error::Model(format!(
                    "chart '{}': empty domain interval",
                    self.id
                )));
            }
            if w.lo.is_finite() && w.hi.is_finite() && w.hi - w.lo <= 2.0 * self.margin {
                return Err(Error::Model(format!(
                    "chart '{}': domain interval too narrow for margin {}",
                    self.id, self.margin
                )));
            }
        }
        Ok(())
    }

    pub fn sign(&self, slot: usize) -> f64 {
        if self.signs.is_empty() {
            1.0
        } else {
            self.signs[slot]
        }
    }

    pub fn z_slot(&self) -> usize {
        self.roles
            .iter()
            .position(|r| matches!(r, CoordRole::Z))
            .expect("validated chart has a z role")
    }

    /// Slot of `q_i` (1-based role index).
    pub fn q_slot(&self, i: usize) -> usize {
        self.roles
            .iter()
            .position(|r| matches!(r, CoordRole::Q(k) if *k == i))
            .expect("validated chart has all q roles")
    }

    /// Slot of `p_i` (1-based role index).
    pub fn p_slot(&self, i: usize) -> usize {
        self.roles
            .iter()
            .position(|r| matches!(r, CoordRole::P(k) if *k == i))
            .expect("validated chart has all p roles")
    }

    pub fn contains(&self, coords: &[f64]) -> bool {
        coords.len() == self.dim()
            && self
                .domain
                .iter()
                .zip(coords)
                .all(|(w, x)| w.contains(*x))
    }

    /// Core sub-box: domain shrunk by the margin on every bounded side.
    pub fn in_core(&self, coords: &[f64]) -> bool {
        coords.len() == self.dim()
            && self
                .domain
                .iter()
                .zip(coords)
                .all(|(w, x)| w.shrunk(self.margin).contains(*x))
    }

    /// Bindings for expressions over this chart: coordinates, `t`, parameters.
    pub fn env(&self, coords: &[f64], t: f64, params: &Env) -> Env {
        let mut env = params.clone();
        for (name, value) in self.coords.iter().zip(coords) {
            env.insert(name.clone(), *value);
        }
        env.insert("t".to_string(), t);
        env
    }

    /// Names of the base (q-role) coordinates in role order.
    pub fn base_names(&self) -> Vec<String> {
        (1..=self.n)
            .map(|i| self.coords[self.q_slot(i)].clone())
            .collect()
    }

    /// Bindings for base expressions: q coordinates, `t`, parameters.
    pub fn base_env(&self, q: &[f64], t: f64, params: &Env) -> Env {
        let mut env = params.clone();
        for (i, value) in q.iter().enumerate() {
            env.insert(self.coords[self.q_slot(i + 1)].clone(), *value);
        }
        env.insert("t".to_string(), t);
        env
    }

    /// Draw a point from the chart core (unbounded sides clamped).
    pub fn sample_core(&self, rng: &mut Lcg64) -> Vec<f64> {
        self.domain
            .iter()
            .map(|w| {
                let (lo, hi) = w.shrunk(self.margin).sample_range();
                rng.uniform(lo, hi)
            })
            .collect()
    }
}

/// A registered gluing between two charts.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TransitionMap {
    pub source: String,
    pub target: String,
    /// Overlap box in source coordinates.
    pub overlap: Vec<Interval>,
    /// One expression per target coordinate, over source coordinate names.
    pub forward: Vec<Expr>,
    /// Nonvanishing factor with `η_target = cocycle · η_source` on the overlap.
    pub cocycle: Expr,
}

impl TransitionMap {
    pub fn covers(&self, coords: &[f64]) -> bool {
        coords.len() == self.overlap.len()
            && self
                .overlap
                .iter()
                .zip(coords)
                .all(|(w, x)| w.contains(*x))
    }

    fn source_env(&self, chart: &Chart, coords: &[f64]) -> Env {
        chart
            .coords
            .iter()
            .cloned()
            .zip(coords.iter().copied())
            .collect()
    }

    pub fn apply(&self, chart: &Chart, coords: &[f64]) -> Result<Vec<f64>> {
        let env = self.source_env(chart, coords);
        self.forward.iter().map(|e| e.evaluate(&env)).collect()
    }

    pub fn cocycle_at(&self, chart: &Chart, coords: &[f64]) -> Result<f64> {
        self.cocycle.evaluate(&self.source_env(chart, coords))
    }

    /// Jacobian of the forward map at a source point.
    pub fn jacobian(&self, chart: &Chart, coords: &[f64]) -> Result<DMatrix<f64>> {
        let env = self.source_env(chart, coords);
        let dim = chart.dim();
        let mut jac = DMatrix::zeros(self.forward.len(), dim);
        for (row, expr) in self.forward.iter().enumerate() {
            let jet = jet2(expr, &chart.coords, &env)?;
            for col in 0..dim {
                jac[(row, col)] = jet.gradient[col];
            }
        }
        Ok(jac)
    }

    /// Draw a point from the overlap box (unbounded sides clamped).
    pub fn sample_overlap(&self, rng: &mut Lcg64) -> Vec<f64> {
        self.overlap
            .iter()
            .map(|w| {
                let (lo, hi) = w.sample_range();
                rng.uniform(lo, hi)
            })
            .collect()
    }
}

/// A point of the manifold: chart id plus stored coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChartPoint {
    pub chart: String,
    pub coords: Vec<f64>,
}

impl ChartPoint {
    pub fn new(chart: &str, coords: Vec<f64>) -> ChartPoint {
        ChartPoint {
            chart: chart.to_string(),
            coords,
        }
    }
}

/// A chart atlas with registered transitions.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Atlas {
    pub name: String,
    pub charts: Vec<Chart>,
    #[serde(default)]
    pub transitions: Vec<TransitionMap>,
}

impl Atlas {
    pub fn validate(&self) -> Result<()> {
        if self.charts.is_empty() {
            return Err(Error::Model("atlas has no charts".into()));
        }
        let mut ids = BTreeSet::new();
        for chart in &self.charts {
            chart.validate()?;
            if !ids.insert(chart.id.clone()) {
                return Err(Error::Model(format!("duplicate chart id '{}'", chart.id)));
            }
        }
        let n = self.charts[0].n;
        if self.charts.iter().any(|c| c.n != n) {
            return Err(Error::Model("charts disagree on dimension".into()));
        }
        for tr in &self.transitions {
            let src = self.chart(&tr.source)?;
            let tgt = self.chart(&tr.target)?;
            if tr.overlap.len() != src.dim() || tr.forward.len() != tgt.dim() {
                return Err(Error::Model(format!(
                    "transition '{}' -> '{}': wrong overlap or forward arity",
                    tr.source, tr.target
                )));
            }
            let allowed: BTreeSet<_> = src.coords.iter().cloned().collect();
            for expr in tr.forward.iter().chain(std::iter::once(&tr.cocycle)) {
                for v in expr.free_variables() {
                    if !allowed.contains(&v) {
                        return Err(Error::Model(format!(
                            "transition '{}' -> '{}': unknown variable '{v}'",
                            tr.source, tr.target
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn chart(&self, id: &str) -> Result<&Chart> {
        self.charts
            .iter()
            .find(|c| c.id == id)
            .ok_or_else(|| Error::UnknownChart(id.to_string()))
    }

    pub fn n(&self) -> usize {
        self.charts[0].n
    }

    pub fn transitions_from<'a>(&'a self, id: &'a str) -> impl Iterator<Item = &'a TransitionMap> {
        self.transitions.iter().filter(move |t| t.source == id)
    }

    /// Find the registered transition that maps `point` into `target`.
    pub fn transition_for(&self, point: &ChartPoint, target: &str) -> Result<&TransitionMap> {
        let mut found_pair = false;
        for tr in &self.transitions {
            if tr.source == point.chart && tr.target == target {
                found_pair = true;
                if tr.covers(&point.coords) {
                    return Ok(tr);
                }
            }
        }
        if found_pair {
            Err(Error::OutsideOverlap {
                from_chart: point.chart.clone(),
                to_chart: target.to_string(),
            })
        } else {
            Err(Error::NoTransition {
                from_chart: point.chart.clone(),
                to_chart: target.to_string(),
            })
        }
    }

    /// Map a point into the target chart through the registered transition.
    pub fn transit(&self, point: &ChartPoint, target: &str) -> Result<ChartPoint> {
        let src = self.chart(&point.chart)?;
        let tgt = self.chart(target)?;
        let tr = self.transition_for(point, target)?;
        let image = tr.apply(src, &point.coords)?;
        if !tgt.contains(&image) {
            return Err(Error::OutsideDomain {
                chart: target.to_string(),
            });
        }
        Ok(ChartPoint::new(target, image))
    }

    /// Evaluate the cocycle of the covering transition at the source point.
    pub fn cocycle_at(&self, source: &str, target: &str, coords: &[f64]) -> Result<f64> {
        let src = self.chart(source)?;
        let point = ChartPoint::new(source, coords.to_vec());
        let tr = self.transition_for(&point, target)?;
        tr.cocycle_at(src, coords)
    }

    // -- builtin models ------------------------------------------------------

    /// Trivial jet space `J¹(R^n, R)`: one global chart `(z, q_1.., p_1..)`.
    pub fn trivial_jet(n: usize) -> Atlas {
        assert!(n >= 1, "trivial jet space needs n >= 1");
        let mut coords = vec!["z".to_string()];
        let mut roles = vec![CoordRole::Z];
        for i in 1..=n {
            coords.push(format!("q{i}"));
            roles.push(CoordRole::Q(i));
        }
        for i in 1..=n {
            coords.push(format!("p{i}"));
            roles.push(CoordRole::P(i));
        }
        let dim = 2 * n + 1;
        let atlas = Atlas {
            name: format!("trivial-jet-{n}"),
            charts: vec![Chart {
                id: "U".to_string(),
                n,
                coords,
                roles,
                signs: Vec::new(),
                domain: vec![Interval::full(); dim],
                margin: DEFAULT_MARGIN,
            }],
            transitions: Vec::new(),
        };
        atlas.validate().expect("builtin atlas is valid");
        atlas
    }

    /// Jet bundle of the dual Möbius line bundle over the circle.
    pub fn mobius() -> Atlas {
        Atlas::mobius_with_margin(DEFAULT_MARGIN)
    }

    /// Möbius model with a custom chart-switch margin.
    ///
    /// One strip chart `x ∈ (0, 3π)` with coordinates `(x, pi, z)`, roles
    /// `(q_1, p_1, z)`, self-glued over `x ∈ (0, π)` by
    /// `(x, pi, z) ↦ (x + 2π, −pi, −z)` with cocycle `−1` (plus the inverse
    /// gluing of `x ∈ (2π, 3π)`).
    pub fn mobius_with_margin(margin: f64) -> Atlas {
        let chart = Chart {
            id: "U".to_string(),
            n: 1,
            coords: vec!["x".to_string(), "pi".to_string(), "z".to_string()],
            roles: vec![CoordRole::Q(1), CoordRole::P(1), CoordRole::Z],
            signs: Vec::new(),
            domain: vec![
                Interval::new(0.0, 3.0 * PI),
                Interval::full(),
                Interval::full(),
            ],
            margin,
        };
        let flip = |shift: f64| {
            vec![
                Expr::add(Expr::var("x"), Expr::constant(shift)),
                Expr::neg(Expr::var("pi")),
                Expr::neg(Expr::var("z")),
            ]
        };
        let minus_one = Expr::neg(Expr::constant(1.0));
        let transitions = vec![
            TransitionMap {
                source: "U".to_string(),
                target: "U".to_string(),
                overlap: vec![
                    Interval::new(0.0, PI),
                    Interval::full(),
                    Interval::full(),
                ],
                forward: flip(TAU),
                cocycle: minus_one.clone(),
            },
            TransitionMap {
                source: "U".to_string(),
                target: "U".to_string(),
                overlap: vec![
                    Interval::new(TAU, 3.0 * PI),
                    Interval::full(),
                    Interval::full(),
                ],
                forward: flip(-TAU),
                cocycle: minus_one,
            },
        ];
        let atlas = Atlas {
            name: "mobius".to_string(),
            charts: vec![chart],
            transitions,
        };
        atlas.validate().expect("builtin atlas is valid");
        atlas
    }

    /// Projectivized cotangent bundle `P(T*R^{n+1})`.
    pub fn projective(n: usize) -> Atlas {
        Atlas::projective_with(n, PROJECTIVE_GAP, PROJECTIVE_BOUND)
    }

    /// Projective model with custom overlap gap and bound.
    ///
    /// Chart `U_k` covers the classes with `p_k ≠ 0` and stores coordinates
    /// `q0..qn` plus the ratios `pj = p_j / p_k` for `j ≠ k`. The Darboux
    /// roles are `z = q^k`, positions the remaining `q^i`, momenta `−p^k_i`
    /// (stored with sign −1), so that the chart contact form is
    /// `η_k = dq^k + Σ p^k_i dq^i`. Transitions `U_k → U_l` divide the ratio
    /// coordinates by `p^k_l` and carry the cocycle `1 / p^k_l`; the overlap
    /// boxes are bounded and keep `|p^k_l| ≥ gap`.
    pub fn projective_with(n: usize, gap: f64, bound: f64) -> Atlas {
        assert!(n >= 1, "projective model needs n >= 1");
        assert!(gap > 0.0 && bound > gap, "need 0 < gap < bound");
        let dim = 2 * n + 1;
        let mut charts = Vec::new();
        for k in 0..=n {
            let mut coords: Vec<String> = (0..=n).map(|i| format!("q{i}")).collect();
            let mut roles = Vec::with_capacity(dim);
            let mut signs = vec![1.0; n + 1];
            let mut m = 0usize;
            for i in 0..=n {
                if i == k {
                    roles.push(CoordRole::Z);
                } else {
                    m += 1;
                    roles.push(CoordRole::Q(m));
                }
            }
            let mut m = 0usize;
            for j in 0..=n {
                if j == k {
                    continue;
                }
                m += 1;
                coords.push(format!("p{j}"));
                roles.push(CoordRole::P(m));
                signs.push(-1.0);
            }
            charts.push(Chart {
                id: format!("U{k}"),
                n,
                coords,
                roles,
                signs,
                domain: vec![Interval::full(); dim],
                margin: DEFAULT_MARGIN,
            });
        }

        let mut transitions = Vec::new();
        for k in 0..=n {
            for l in 0..=n {
                if l == k {
                    continue;
                }
                let pl = format!("p{l}");
                // target coordinates: q identity, then p^l_j for j != l
                let mut forward: Vec<Expr> = (0..=n).map(|i| Expr::var(&format!("q{i}"))).collect();
                for j in 0..=n {
                    if j == l {
                        continue;
                    }
                    let numerator = if j == k {
                        Expr::constant(1.0)
                    } else {
                        Expr::var(&format!("p{j}"))
                    };
                    forward.push(Expr::div(numerator, Expr::var(&pl)));
                }
                let cocycle = Expr::div(Expr::constant(1.0), Expr::var(&pl));
                for positive in [true, false] {
                    let mut overlap = vec![Interval::new(-bound, bound); dim];
                    let pl_slot = charts[k]
                        .coords
                        .iter()
                        .position(|c| *c == pl)
                        .expect("pl is a source coordinate");
                    overlap[pl_slot] = if positive {
                        Interval::new(gap, bound)
                    } else {
                        Interval::new(-bound, -gap)
                    };
                    transitions.push(TransitionMap {
                        source: format!("U{k}"),
                        target: format!("U{l}"),
                        overlap,
                        forward: forward.clone(),
                        cocycle: cocycle.clone(),
                    });
                }
            }
        }

        let atlas = Atlas {
            name: format!("projective-{n}"),
            charts,
            transitions,
        };
        atlas.validate().expect("builtin atlas is valid");
        atlas
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trivial_jet_structure() {
        let a1 = Atlas::trivial_jet(1);
        assert_eq!(a1.charts.len(), 1);
        assert_eq!(a1.charts[0].coords, vec!["z", "q1", "p1"]);
        assert!(a1.transitions.is_empty());
        let a2 = Atlas::trivial_jet(2);
        assert_eq!(a2.charts[0].dim(), 5);
        assert!(a2.transitions.is_empty());
    }

    #[test]
    fn mobius_gluing_maps_the_printed_example() {
        let atlas = Atlas::mobius();
        let p = ChartPoint::new("U", vec![0.5, 1.0, 2.0]);
        let image = atlas.transit(&p, "U").unwrap();
        assert!((image.coords[0] - (0.5 + TAU)).abs() < 1e-15);
        assert_eq!(image.coords[1], -1.0);
        assert_eq!(image.coords[2], -2.0);
        // cocycle is -1 everywhere on the overlap
        assert_eq!(atlas.cocycle_at("U", "U", &p.coords).unwrap(), -1.0);
        // double application returns to the start through the inverse gluing
        let back = atlas.transit(&image, "U").unwrap();
        for (a, b) in back.coords.iter().zip(&p.coords) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn trivial_jet_has_no_transition() {
        let atlas = Atlas::trivial_jet(1);
        let p = ChartPoint::new("U", vec![0.0, 0.0, 0.0]);
        assert!(matches!(
            atlas.cocycle_at("U", "U", &p.coords),
            Err(Error::NoTransition { .. })
        ));
        assert!(matches!(
            atlas.transit(&p, "U"),
            Err(Error::NoTransition { .. })
        ));
    }

    #[test]
    fn identity_transition_region_keeps_coordinates() {
        // a two-chart split of the trivial jet line glued by the identity
        let mk_chart = |id: &str, lo: f64, hi: f64| Chart {
            id: id.to_string(),
            n: 1,
            coords: vec!["z".into(), "q1".into(), "p1".into()],
            roles: vec![CoordRole::Z, CoordRole::Q(1), CoordRole::P(1)],
            signs: Vec::new(),
            domain: vec![Interval::full(), Interval::new(lo, hi), Interval::full()],
            margin: 0.1,
        };
        let identity = vec![Expr::var("z"), Expr::var("q1"), Expr::var("p1")];
        let overlap = vec![Interval::full(), Interval::new(-1.0, 1.0), Interval::full()];
        let atlas = Atlas {
            name: "split".into(),
            charts: vec![mk_chart("A", -10.0, 1.0), mk_chart("B", -1.0, 10.0)],
            transitions: vec![
                TransitionMap {
                    source: "A".into(),
                    target: "B".into(),
                    overlap: overlap.clone(),
                    forward: identity.clone(),
                    cocycle: Expr::constant(1.0),
                },
                TransitionMap {
                    source: "B".into(),
                    target: "A".into(),
                    overlap,
                    forward: identity,
                    cocycle: Expr::constant(1.0),
                },
            ],
        };
        atlas.validate().unwrap();
        let p = ChartPoint::new("A", vec![0.3, 0.5, -0.2]);
        let q = atlas.transit(&p, "B").unwrap();
        assert_eq!(q.coords, p.coords);
        assert_eq!(atlas.cocycle_at("A", "B", &p.coords).unwrap(), 1.0);
    }

    #[test]
    fn projective_transition_divides_ratios() {
        let atlas = Atlas::projective(2);
        assert_eq!(atlas.charts.len(), 3);
        // U0 coords: q0 q1 q2 p1 p2; take p^0_1 = 2 (outside the bound, so
        // use a point inside the overlap box instead for transit itself)
        let p = ChartPoint::new("U0", vec![0.1, 0.2, 0.3, 2.0, 1.0]);
        let image = atlas.transit(&p, "U1").unwrap();
        // U1 coords: q0 q1 q2 p0 p2 with p^1_0 = 1/2, p^1_2 = p2/p1
        assert_eq!(image.coords[..3], p.coords[..3]);
        assert!((image.coords[3] - 0.5).abs() < 1e-15);
        assert!((image.coords[4] - 0.5).abs() < 1e-15);
        assert!((atlas.cocycle_at("U0", "U1", &p.coords).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn projective_spec_point_values() {
        // p^0_1 = 2, p^0_2 = 4 maps to p^1_0 = 1/2, p^1_2 = 2, cocycle 1/2
        let atlas = Atlas::projective_with(2, 0.1, 5.0);
        let p = ChartPoint::new("U0", vec![0.0, 0.0, 0.0, 2.0, 4.0]);
        let image = atlas.transit(&p, "U1").unwrap();
        assert_eq!(image.coords[3], 0.5);
        assert_eq!(image.coords[4], 2.0);
        assert_eq!(atlas.cocycle_at("U0", "U1", &p.coords).unwrap(), 0.5);
    }

    #[test]
    fn projective_overlap_excludes_vanishing_momentum() {
        let atlas = Atlas::projective(2);
        let p = ChartPoint::new("U0", vec![0.0, 0.0, 0.0, 0.0, 1.0]);
        assert!(matches!(
            atlas.transit(&p, "U1"),
            Err(Error::OutsideOverlap { .. })
        ));
        assert_eq!(atlas.projective_chart_count(), 3);
    }

    #[test]
    fn projective_two_charts_for_circle() {
        assert_eq!(Atlas::projective(1).charts.len(), 2);
    }

    #[test]
    fn mobius_point_containment_and_core() {
        let atlas = Atlas::mobius();
        let chart = atlas.chart("U").unwrap();
        assert!(chart.contains(&[0.05, 0.0, 0.0]));
        assert!(!chart.in_core(&[0.05, 0.0, 0.0]));
        assert!(chart.in_core(&[1.0, 5.0, -7.0]));
        assert!(!chart.contains(&[-0.1, 0.0, 0.0]));
    }

    #[test]
    fn interval_serde_uses_null_for_infinite() {
        let w = Interval::new(f64::NEG_INFINITY, 2.5);
        let json = serde_json::to_string(&w).unwrap();
        assert_eq!(json, "[null,2.5]");
        let back: Interval = serde_json::from_str(&json).unwrap();
        assert_eq!(back, w);
    }
}

#[cfg(test)]
impl Atlas {
    fn projective_chart_count(&self) -> usize {
        self.charts.len()
    }
}
