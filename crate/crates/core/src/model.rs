//! Network and economic primitives: the closed network of regions, dispatch
//! activities, linear demand curves and cost rates, plus JSON config loading.
//!
//! Indices are zero-based in memory. The JSON document uses one-based server
//! and buffer numbers for activities.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The bundled four-region Manhattan instance.
pub const MANHATTAN_CONFIG: &str = include_str!("../configs/manhattan.json");

const SIMPLEX_TOL: f64 = 1e-12;

/// A dispatch activity: `server` draws a car from `buffer`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Activity {
    pub server: usize,
    pub buffer: usize,
}

impl Activity {
    pub fn is_local(&self) -> bool {
        self.server == self.buffer
    }
}

#[derive(Debug, Clone)]
pub struct NetworkModel {
    pub num_regions: usize,
    pub activities: Vec<Activity>,
    /// Routing probabilities from the travel node into each buffer.
    pub q: Vec<f64>,
    /// Travel completion rate per traveling car, per hour.
    pub eta_n: f64,
    /// Fleet size.
    pub n: u64,
    /// Region-to-region distances in miles.
    pub distances: Vec<Vec<f64>>,
}

impl NetworkModel {
    pub fn num_activities(&self) -> usize {
        self.activities.len()
    }

    pub fn incidence(&self) -> IncidenceMatrices {
        IncidenceMatrices::from_activities(self.num_regions, &self.activities)
    }

    /// Activities undertaken by `server`, in index order.
    pub fn server_activities(&self, server: usize) -> impl Iterator<Item = usize> + '_ {
        self.activities
            .iter()
            .enumerate()
            .filter(move |(_, a)| a.server == server)
            .map(|(j, _)| j)
    }

    /// Activities that draw from `buffer`, in index order.
    pub fn buffer_activities(&self, buffer: usize) -> impl Iterator<Item = usize> + '_ {
        self.activities
            .iter()
            .enumerate()
            .filter(move |(_, a)| a.buffer == buffer)
            .map(|(j, _)| j)
    }

    pub fn sqrt_n(&self) -> f64 {
        (self.n as f64).sqrt()
    }

    pub fn validate(&self) -> Result<()> {
        let i_count = self.num_regions;
        if i_count == 0 {
            return Err(Error::invariant("regions", "at least one region required"));
        }
        if self.q.len() != i_count {
            return Err(Error::Dimension {
                field: "q".into(),
                expected: i_count,
                got: self.q.len(),
            });
        }
        let total: f64 = self.q.iter().sum();
        if (total - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::invariant("q", format!("q sums to {total}, expected 1")));
        }
        if let Some(i) = self.q.iter().position(|&p| !(p > 0.0)) {
            return Err(Error::invariant(format!("q[{}]", i + 1), "q_i > 0 violated"));
        }
        if self.activities.len() < i_count {
            return Err(Error::invariant(
                "activities",
                "the first I activities must be the local ones",
            ));
        }
        for (j, act) in self.activities.iter().enumerate() {
            if act.server >= i_count || act.buffer >= i_count {
                return Err(Error::invariant(
                    format!("activities[{}]", j + 1),
                    "server/buffer index out of range",
                ));
            }
            if j < i_count && (act.server != j || act.buffer != j) {
                return Err(Error::invariant(
                    format!("activities[{}]", j + 1),
                    "the first I activities must be local (server = buffer = j)",
                ));
            }
            if self.activities[..j].contains(act) {
                return Err(Error::invariant(
                    format!("activities[{}]", j + 1),
                    "duplicate (server, buffer) pair",
                ));
            }
        }
        if !(self.eta_n > 0.0) || !self.eta_n.is_finite() {
            return Err(Error::invariant("eta_n", "eta_n > 0 violated"));
        }
        if self.n < 1 {
            return Err(Error::invariant("n", "n >= 1 violated"));
        }
        if self.distances.len() != i_count {
            return Err(Error::Dimension {
                field: "distances".into(),
                expected: i_count,
                got: self.distances.len(),
            });
        }
        for (i, row) in self.distances.iter().enumerate() {
            if row.len() != i_count {
                return Err(Error::Dimension {
                    field: format!("distances[{}]", i + 1),
                    expected: i_count,
                    got: row.len(),
                });
            }
            if row[i] != 0.0 {
                return Err(Error::invariant(
                    format!("distances[{}][{}]", i + 1, i + 1),
                    "diagonal must be zero",
                ));
            }
            for (k, &d) in row.iter().enumerate() {
                if !(d >= 0.0) || d != self.distances[k][i] {
                    return Err(Error::invariant(
                        format!("distances[{}][{}]", i + 1, k + 1),
                        "distances must be nonnegative and symmetric",
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Capacity-consumption matrix `A` (server incidence) and constituency matrix
/// `C` (buffer incidence), both `I x J`.
#[derive(Debug, Clone)]
pub struct IncidenceMatrices {
    pub a: DMatrix<f64>,
    pub c: DMatrix<f64>,
}

impl IncidenceMatrices {
    pub fn from_activities(num_regions: usize, activities: &[Activity]) -> Self {
        let j_count = activities.len();
        let mut a = DMatrix::zeros(num_regions, j_count);
        let mut c = DMatrix::zeros(num_regions, j_count);
        for (j, act) in activities.iter().enumerate() {
            a[(act.server, j)] = 1.0;
            c[(act.buffer, j)] = 1.0;
        }
        Self { a, c }
    }
}

/// Linear demand `Λ_i(p) = a_i − b_i p` per region plus cost rates of the
/// `n`-car system (per car, per hour).
#[derive(Debug, Clone)]
pub struct EconParams {
    pub demand_a: Vec<f64>,
    pub demand_b: Vec<f64>,
    pub h0: f64,
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

impl EconParams {
    pub fn num_regions(&self) -> usize {
        self.demand_a.len()
    }

    pub fn validate(&self, num_regions: usize) -> Result<()> {
        for (field, v) in [
            ("demand.a", &self.demand_a),
            ("demand.b", &self.demand_b),
            ("costs.h", &self.h),
            ("costs.c", &self.c),
        ] {
            if v.len() != num_regions {
                return Err(Error::Dimension {
                    field: field.into(),
                    expected: num_regions,
                    got: v.len(),
                });
            }
        }
        for i in 0..num_regions {
            if !(self.demand_a[i] > 0.0) {
                return Err(Error::invariant(format!("demand.a[{}]", i + 1), "a_i > 0 violated"));
            }
            if !(self.demand_b[i] > 0.0) {
                return Err(Error::invariant(format!("demand.b[{}]", i + 1), "b_i > 0 violated"));
            }
            if !(self.h[i] > self.h0) {
                return Err(Error::invariant(format!("costs.h[{}]", i + 1), "h_i > h0 violated"));
            }
            if !(self.c[i] >= 0.0) {
                return Err(Error::invariant(format!("costs.c[{}]", i + 1), "c_i >= 0 violated"));
            }
        }
        if !(self.h0 >= 0.0) {
            return Err(Error::invariant("costs.h0", "h0 >= 0 violated"));
        }
        Ok(())
    }

    /// Demand rate of region `i` at price `p`.
    pub fn demand(&self, i: usize, p: f64) -> Result<f64> {
        let choke = self.demand_a[i] / self.demand_b[i];
        if !(0.0..=choke).contains(&p) {
            return Err(Error::Domain {
                what: "demand price",
                value: p,
                lo: 0.0,
                hi: choke,
            });
        }
        Ok(self.demand_a[i] - self.demand_b[i] * p)
    }

    /// Price that induces demand rate `lambda` in region `i`.
    pub fn demand_inverse(&self, i: usize, lambda: f64) -> Result<f64> {
        if !(0.0..=self.demand_a[i]).contains(&lambda) {
            return Err(Error::Domain {
                what: "demand rate",
                value: lambda,
                lo: 0.0,
                hi: self.demand_a[i],
            });
        }
        Ok(self.inverse_unchecked(i, lambda))
    }

    #[inline]
    pub(crate) fn inverse_unchecked(&self, i: usize, lambda: f64) -> f64 {
        (self.demand_a[i] - lambda) / self.demand_b[i]
    }

    /// Revenue rate `π(λ) = Σ λ_i Λ_i⁻¹(λ_i)`.
    pub fn revenue_rate(&self, lambda: &[f64]) -> Result<f64> {
        if lambda.len() != self.num_regions() {
            return Err(Error::Dimension {
                field: "lambda".into(),
                expected: self.num_regions(),
                got: lambda.len(),
            });
        }
        lambda
            .iter()
            .enumerate()
            .map(|(i, &l)| self.demand_inverse(i, l).map(|p| l * p))
            .sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PricingKind {
    Static,
    Dynamic,
}

impl PricingKind {
    pub const ALL: [PricingKind; 2] = [PricingKind::Static, PricingKind::Dynamic];

    pub fn name(&self) -> &'static str {
        match self {
            PricingKind::Static => "static",
            PricingKind::Dynamic => "dynamic",
        }
    }
}

impl std::str::FromStr for PricingKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "static" => Ok(PricingKind::Static),
            "dynamic" => Ok(PricingKind::Dynamic),
            other => Err(Error::Argument(format!("unknown pricing policy `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DispatchKind {
    Dp1,
    Dp2,
    Static,
    Closest,
}

impl DispatchKind {
    pub const ALL: [DispatchKind; 4] = [
        DispatchKind::Dp1,
        DispatchKind::Dp2,
        DispatchKind::Static,
        DispatchKind::Closest,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            DispatchKind::Dp1 => "dp1",
            DispatchKind::Dp2 => "dp2",
            DispatchKind::Static => "static",
            DispatchKind::Closest => "closest",
        }
    }
}

impl std::str::FromStr for DispatchKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dp1" => Ok(DispatchKind::Dp1),
            "dp2" => Ok(DispatchKind::Dp2),
            "static" | "static_split" => Ok(DispatchKind::Static),
            "closest" => Ok(DispatchKind::Closest),
            other => Err(Error::Argument(format!("unknown dispatch policy `{other}`"))),
        }
    }
}

/// When a server's choice of buffer is made.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Discipline {
    /// The car is picked when the rider arrives; idle cars stay available
    /// to every region until then.
    #[default]
    Matching,
    /// A free server reserves the head car of the chosen buffer and keeps it
    /// until its next rider arrives.
    Committed,
}

impl Discipline {
    pub fn name(&self) -> &'static str {
        match self {
            Discipline::Matching => "matching",
            Discipline::Committed => "committed",
        }
    }
}

impl std::str::FromStr for Discipline {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "matching" => Ok(Discipline::Matching),
            "committed" => Ok(Discipline::Committed),
            other => Err(Error::Argument(format!("unknown discipline `{other}`"))),
        }
    }
}

/// Simulation run settings taken from the `sim`, `dispatch` and `pricing`
/// sections of the config.
#[derive(Debug, Clone, PartialEq)]
pub struct SimSettings {
    pub horizon_hours: f64,
    pub warmup_hours: f64,
    pub replications: usize,
    pub seed: u64,
    pub dispatch: DispatchKind,
    pub safety_stock: u32,
    pub discipline: Discipline,
    pub pricing: PricingKind,
}

// ---------------------------------------------------------------------------
// JSON schema

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub regions: usize,
    pub activities: Vec<Activity>,
    pub q: Vec<f64>,
    pub eta_n: f64,
    pub n: u64,
    pub demand: DemandSpec,
    pub costs: CostSpec,
    pub distances: Vec<Vec<f64>>,
    pub sim: SimSpec,
    pub dispatch: DispatchSpec,
    pub pricing: PricingKind,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum DemandSpec {
    Ab { a: Vec<f64>, b: Vec<f64> },
    Pstar { p_star: Vec<f64>, lambda_star: Vec<f64> },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostSpec {
    pub h0: f64,
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSpec {
    pub horizon_hours: f64,
    pub warmup_hours: f64,
    pub replications: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DispatchSpec {
    pub policy: DispatchKind,
    #[serde(default = "default_safety_stock")]
    pub safety_stock: u32,
    #[serde(default)]
    pub discipline: Discipline,
}

fn default_safety_stock() -> u32 {
    1
}

impl Config {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Move to fleet size `n` along the heavy-traffic sequence: the travel
    /// rate is reset so that `√n (ηⁿ − e'λ*)` keeps its current value.
    /// Costs stay per car.
    pub fn rescale_fleet(&mut self, n: u64) -> Result<()> {
        if n == 0 {
            return Err(Error::invariant("n", "n >= 1 violated"));
        }
        let (_, econ, _) = self.resolve()?;
        let eta: f64 = econ.demand_a.iter().map(|a| 0.5 * a).sum();
        let eta_hat = (self.n as f64).sqrt() * (self.eta_n - eta);
        self.eta_n = eta + eta_hat / (n as f64).sqrt();
        self.n = n;
        Ok(())
    }

    /// Validate every invariant and produce the immutable model objects.
    pub fn resolve(&self) -> Result<(NetworkModel, EconParams, SimSettings)> {
        let i_count = self.regions;
        let activities = self
            .activities
            .iter()
            .enumerate()
            .map(|(j, a)| {
                if a.server == 0 || a.buffer == 0 {
                    Err(Error::invariant(
                        format!("activities[{}]", j + 1),
                        "server/buffer are 1-based",
                    ))
                } else {
                    Ok(Activity {
                        server: a.server - 1,
                        buffer: a.buffer - 1,
                    })
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let model = NetworkModel {
            num_regions: i_count,
            activities,
            q: self.q.clone(),
            eta_n: self.eta_n,
            n: self.n,
            distances: self.distances.clone(),
        };
        model.validate()?;

        let (demand_a, demand_b) = match &self.demand {
            DemandSpec::Ab { a, b } => (a.clone(), b.clone()),
            DemandSpec::Pstar {
                p_star,
                lambda_star,
            } => {
                if p_star.len() != i_count || lambda_star.len() != i_count {
                    return Err(Error::Dimension {
                        field: "demand".into(),
                        expected: i_count,
                        got: p_star.len().min(lambda_star.len()),
                    });
                }
                if let Some(i) = p_star.iter().position(|&p| !(p > 0.0)) {
                    return Err(Error::invariant(
                        format!("demand.p_star[{}]", i + 1),
                        "p* > 0 violated",
                    ));
                }
                let a = lambda_star.iter().map(|l| 2.0 * l).collect();
                let b = lambda_star.iter().zip(p_star).map(|(l, p)| l / p).collect();
                (a, b)
            }
        };
        let econ = EconParams {
            demand_a,
            demand_b,
            h0: self.costs.h0,
            h: self.costs.h.clone(),
            c: self.costs.c.clone(),
        };
        econ.validate(i_count)?;

        let settings = SimSettings {
            horizon_hours: self.sim.horizon_hours,
            warmup_hours: self.sim.warmup_hours,
            replications: self.sim.replications,
            seed: self.sim.seed,
            dispatch: self.dispatch.policy,
            safety_stock: self.dispatch.safety_stock,
            discipline: self.dispatch.discipline,
            pricing: self.pricing,
        };
        Ok((model, econ, settings))
    }
}

/// Parse and validate a config document.
pub fn load_model(config_text: &str) -> Result<(NetworkModel, EconParams, SimSettings)> {
    Config::from_json(config_text)?.resolve()
}
