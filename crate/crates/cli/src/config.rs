//! Run configuration: a single JSON document describing the model, the
//! Hamiltonian, optional section, initial conditions, integrator and grid.
//!
//! Expressions are JSON strings in the engine grammar. Models are either
//! builtin (`{"builtin": "mobius"}`) or inline atlas definitions with the
//! same fields as the geometry types.

use std::collections::BTreeMap;

use anyhow::{anyhow, bail, Context};
use serde::Deserialize;

use contactum_core::hj::GridAxis;
use contactum_core::{parse, Atlas, ChartPoint, ContactModel, Env, SectionModel};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSpec,
    #[serde(default)]
    pub parameters: BTreeMap<String, f64>,
    #[serde(default)]
    pub hamiltonian: Option<ExprSpec>,
    #[serde(default)]
    pub section: Option<ExprSpec>,
    #[serde(default)]
    pub initial: Option<InitialSpec>,
    #[serde(default)]
    pub integrator: Option<IntegratorSpec>,
    #[serde(default)]
    pub grid: Option<GridSpec>,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "default_tolerance_scale")]
    pub tolerance_scale: f64,
    #[serde(default)]
    pub output: Option<OutputSpec>,
}

fn default_seed() -> u64 {
    42
}

fn default_samples() -> usize {
    100
}

fn default_tolerance_scale() -> f64 {
    1.0
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
pub enum ModelSpec {
    Builtin {
        builtin: String,
        #[serde(default)]
        n: Option<usize>,
        #[serde(default)]
        margin: Option<f64>,
        #[serde(default)]
        gap: Option<f64>,
        #[serde(default)]
        bound: Option<f64>,
    },
    Inline {
        inline: Atlas,
    },
}

/// Expression text for one chart or per-chart texts keyed by chart id.
#[derive(Debug, Deserialize)]
#[serde(untagged)]
pub enum ExprSpec {
    Single(String),
    PerChart(BTreeMap<String, String>),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSpec {
    pub chart: String,
    pub coords: Vec<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorSpec {
    pub t0: f64,
    pub t1: f64,
    pub h: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    #[serde(default)]
    pub chart: Option<String>,
    pub q: Vec<GridAxis>,
    #[serde(default)]
    pub t: Option<GridAxis>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    pub dir: String,
}

impl RunConfig {
    pub fn load(path: &std::path::Path) -> anyhow::Result<RunConfig> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config '{}'", path.display()))?;
        let config: RunConfig =
            serde_json::from_str(&text).with_context(|| "config is not valid JSON")?;
        Ok(config)
    }

    pub fn build_atlas(&self) -> anyhow::Result<Atlas> {
        let atlas = match &self.model {
            ModelSpec::Builtin {
                builtin,
                n,
                margin,
                gap,
                bound,
            } => match builtin.as_str() {
                "trivial-jet" => {
                    let n = n.unwrap_or(1);
                    if n < 1 {
                        bail!("trivial-jet needs n >= 1");
                    }
                    let mut atlas = Atlas::trivial_jet(n);
                    if let Some(m) = margin {
                        for chart in &mut atlas.charts {
                            chart.margin = *m;
                        }
                    }
                    atlas
                }
                "mobius" => Atlas::mobius_with_margin(
                    margin.unwrap_or(contactum_core::geometry::DEFAULT_MARGIN),
                ),
                "projective" => {
                    let n = n.unwrap_or(2);
                    if n < 1 {
                        bail!("projective needs n >= 1");
                    }
                    Atlas::projective_with(
                        n,
                        gap.unwrap_or(contactum_core::geometry::PROJECTIVE_GAP),
                        bound.unwrap_or(contactum_core::geometry::PROJECTIVE_BOUND),
                    )
                }
                other => bail!("unknown builtin model '{other}'"),
            },
            ModelSpec::Inline { inline } => {
                let atlas = inline.clone();
                atlas.validate().map_err(|e| anyhow!("{e}"))?;
                atlas
            }
        };
        Ok(atlas)
    }

    fn expr_map(
        atlas: &Atlas,
        spec: &ExprSpec,
        what: &str,
    ) -> anyhow::Result<BTreeMap<String, contactum_core::Expr>> {
        let mut out = BTreeMap::new();
        match spec {
            ExprSpec::Single(text) => {
                let expr = parse(text).map_err(|e| anyhow!("{what}: {e}"))?;
                for chart in &atlas.charts {
                    out.insert(chart.id.clone(), expr.clone());
                }
            }
            ExprSpec::PerChart(map) => {
                for (chart_id, text) in map {
                    atlas
                        .chart(chart_id)
                        .map_err(|e| anyhow!("{what}: {e}"))?;
                    let expr = parse(text)
                        .map_err(|e| anyhow!("{what} for chart '{chart_id}': {e}"))?;
                    out.insert(chart_id.clone(), expr);
                }
            }
        }
        Ok(out)
    }

    pub fn build_model(&self) -> anyhow::Result<(ContactModel, Option<SectionModel>)> {
        let atlas = self.build_atlas()?;
        let spec = self
            .hamiltonian
            .as_ref()
            .ok_or_else(|| anyhow!("config has no 'hamiltonian'"))?;
        let hamiltonians = Self::expr_map(&atlas, spec, "hamiltonian")?;
        let parameters: Env = self.parameters.clone();
        let model = ContactModel::new(atlas, hamiltonians, parameters)
            .map_err(|e| anyhow!("{e}"))?;
        let section = match &self.section {
            Some(spec) => {
                let sections = Self::expr_map(&model.atlas, spec, "section")?;
                Some(
                    SectionModel::new(&model.atlas, sections, &model.parameters)
                        .map_err(|e| anyhow!("{e}"))?,
                )
            }
            None => None,
        };
        Ok((model, section))
    }

    pub fn initial_point(&self, model: &ContactModel) -> anyhow::Result<ChartPoint> {
        let spec = self
            .initial
            .as_ref()
            .ok_or_else(|| anyhow!("config has no 'initial'"))?;
        let chart = model
            .chart(&spec.chart)
            .map_err(|e| anyhow!("initial: {e}"))?;
        if spec.coords.len() != chart.dim() {
            bail!(
                "initial: chart '{}' needs {} coordinates, got {}",
                spec.chart,
                chart.dim(),
                spec.coords.len()
            );
        }
        let point = ChartPoint::new(&spec.chart, spec.coords.clone());
        if !chart.contains(&point.coords) {
            bail!("initial point lies outside the domain of chart '{}'", spec.chart);
        }
        Ok(point)
    }

    pub fn integrator(&self) -> anyhow::Result<&IntegratorSpec> {
        let spec = self
            .integrator
            .as_ref()
            .ok_or_else(|| anyhow!("config has no 'integrator'"))?;
        if !(spec.h > 0.0) || !(spec.t1 > spec.t0) {
            bail!("integrator needs h > 0 and t1 > t0");
        }
        Ok(spec)
    }

    /// Grid chart id: explicit, or the unique chart of the model.
    pub fn grid_chart<'a>(&'a self, model: &'a ContactModel) -> anyhow::Result<&'a str> {
        if let Some(grid) = &self.grid {
            if let Some(chart) = &grid.chart {
                model.chart(chart).map_err(|e| anyhow!("grid: {e}"))?;
                return Ok(chart);
            }
        }
        if model.atlas.charts.len() == 1 {
            Ok(&model.atlas.charts[0].id)
        } else {
            bail!("grid must name a chart for multi-chart models")
        }
    }
}
