//! Static (fluid) planning: optimal static demand rates, the nominal
//! processing plan `x*`, basic activities, buffer pools and the canonical
//! workload matrix.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{EconParams, NetworkModel};

/// Activities with level above this are basic.
pub const TOL_BASIC: f64 = 1e-9;
/// Maximum residual of `A x = e` and `R x = ν`.
pub const TOL_RESIDUAL: f64 = 1e-8;
const TOL_NEGATIVE: f64 = 1e-6;
const TOL_RANK: f64 = 1e-10;

#[derive(Debug, Clone, Serialize)]
pub struct StaticPlan {
    pub lambda_star: Vec<f64>,
    pub p_star: Vec<f64>,
    /// Nominal service rate per activity, `μ_j* = λ*_{s(j)}`.
    pub mu_star: Vec<f64>,
    #[serde(serialize_with = "ser_matrix")]
    pub r: DMatrix<f64>,
    pub nu: Vec<f64>,
    /// Travel rate in the balanced (limit) system, `e'λ*`.
    pub eta: f64,
    pub eta_hat: f64,
    pub x_star: Vec<f64>,
    pub basic: Vec<usize>,
    pub pools: BufferPools,
    #[serde(serialize_with = "ser_matrix")]
    pub m: DMatrix<f64>,
}

impl StaticPlan {
    pub fn is_basic(&self, j: usize) -> bool {
        self.x_star[j] > TOL_BASIC
    }

    /// `G_{lk} = λ_k* 1{k ∈ S_l}`.
    pub fn pool_rate_matrix(&self) -> DMatrix<f64> {
        let l_count = self.pools.buffers.len();
        let i_count = self.lambda_star.len();
        DMatrix::from_fn(l_count, i_count, |l, k| {
            if self.pools.servers[l].contains(&k) {
                self.lambda_star[k]
            } else {
                0.0
            }
        })
    }

    pub fn single_pool(&self) -> bool {
        self.pools.buffers.len() == 1
    }
}

pub(crate) fn ser_matrix<S: serde::Serializer>(
    m: &DMatrix<f64>,
    s: S,
) -> std::result::Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    let mut seq = s.serialize_seq(Some(m.nrows()))?;
    for row in m.row_iter() {
        let r: Vec<f64> = row.iter().copied().collect();
        seq.serialize_element(&r)?;
    }
    seq.end()
}

/// Revenue-maximizing static rates and prices. For linear demand the optimum
/// is the vertex of each parabola: `λ_i* = a_i/2`, `p_i* = a_i/(2 b_i)`.
pub fn optimal_static_rates(econ: &EconParams) -> (Vec<f64>, Vec<f64>) {
    let lambda: Vec<f64> = econ.demand_a.iter().map(|a| 0.5 * a).collect();
    let price: Vec<f64> = econ
        .demand_a
        .iter()
        .zip(&econ.demand_b)
        .map(|(a, b)| a / (2.0 * b))
        .collect();
    for (l, a) in lambda.iter().zip(&econ.demand_a) {
        debug_assert!(*l > 0.0 && l < a, "static optimum must be interior");
    }
    (lambda, price)
}

/// Solve for the nominal processing plan and assemble the full static plan.
pub fn nominal_plan(model: &NetworkModel, econ: &EconParams) -> Result<StaticPlan> {
    let (lambda_star, p_star) = optimal_static_rates(econ);
    nominal_plan_with_rates(model, lambda_star, p_star)
}

pub fn nominal_plan_with_rates(
    model: &NetworkModel,
    lambda_star: Vec<f64>,
    p_star: Vec<f64>,
) -> Result<StaticPlan> {
    let i_count = model.num_regions;
    let j_count = model.num_activities();
    if lambda_star.len() != i_count {
        return Err(Error::Dimension {
            field: "lambda_star".into(),
            expected: i_count,
            got: lambda_star.len(),
        });
    }
    if let Some(i) = lambda_star.iter().position(|&l| !(l > 0.0)) {
        return Err(Error::Assumption(format!(
            "lambda*_{} must be positive for a nominal plan",
            i + 1
        )));
    }
    let eta: f64 = lambda_star.iter().sum();
    let eta_hat = model.sqrt_n() * (model.eta_n - eta);
    let nu: Vec<f64> = model.q.iter().map(|q| q * eta).collect();
    let mu_star: Vec<f64> = model
        .activities
        .iter()
        .map(|a| lambda_star[a.server])
        .collect();
    let inc = model.incidence();
    let r = DMatrix::from_fn(i_count, j_count, |i, j| mu_star[j] * inc.c[(i, j)]);

    let mut x = vec![0.0; j_count];
    for i in 0..i_count {
        x[i] = lambda_star[i].min(nu[i]) / lambda_star[i];
    }

    let nonlocal: Vec<usize> = (i_count..j_count).collect();
    if !nonlocal.is_empty() {
        // Rows 0..I: server capacity; rows I..2I: buffer flow balance.
        let coeff = DMatrix::from_fn(2 * i_count, nonlocal.len(), |row, col| {
            let j = nonlocal[col];
            if row < i_count {
                inc.a[(row, j)]
            } else {
                r[(row - i_count, j)]
            }
        });
        let rhs = DVector::from_fn(2 * i_count, |row, _| {
            if row < i_count {
                1.0 - x[row]
            } else {
                let i = row - i_count;
                nu[i] - lambda_star[i] * x[i]
            }
        });
        let svd = coeff.clone().svd(true, true);
        let smallest = svd.singular_values.iter().copied().fold(f64::INFINITY, f64::min);
        if !(smallest > TOL_RANK) {
            return Err(Error::Assumption(format!(
                "nominal plan not unique: nonlocal activity matrix is rank deficient \
                 (smallest singular value {smallest:.3e})"
            )));
        }
        let sol = svd
            .solve(&rhs, 0.0)
            .map_err(|e| Error::Numerical(format!("least squares failed: {e}")))?;
        for (col, &j) in nonlocal.iter().enumerate() {
            x[j] = sol[col];
        }
    }

    let min_x = x.iter().copied().fold(f64::INFINITY, f64::min);
    if min_x < -TOL_NEGATIVE {
        return Err(Error::Assumption(format!(
            "heavy traffic assumption violated: nominal plan has negative level {min_x:.3e}"
        )));
    }
    for v in x.iter_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    let (cap_res, flow_res) = plan_residuals(model, &r, &nu, &x);
    if cap_res > TOL_RESIDUAL || flow_res > TOL_RESIDUAL {
        return Err(Error::Assumption(format!(
            "heavy traffic assumption violated: residuals |Ax-e|={cap_res:.3e}, |Rx-nu|={flow_res:.3e}"
        )));
    }

    let basic: Vec<usize> = (0..j_count).filter(|&j| x[j] > TOL_BASIC).collect();
    let pools = buffer_pools(model, &basic);
    let m = workload_matrix(&pools, i_count);
    Ok(StaticPlan {
        lambda_star,
        p_star,
        mu_star,
        r,
        nu,
        eta,
        eta_hat,
        x_star: x,
        basic,
        pools,
        m,
    })
}

/// Max-norm residuals of `A x = e` and `R x = ν`.
pub fn plan_residuals(
    model: &NetworkModel,
    r: &DMatrix<f64>,
    nu: &[f64],
    x: &[f64],
) -> (f64, f64) {
    let i_count = model.num_regions;
    let mut cap = vec![0.0; i_count];
    let mut flow = vec![0.0; i_count];
    for (j, act) in model.activities.iter().enumerate() {
        cap[act.server] += x[j];
        flow[act.buffer] += r[(act.buffer, j)] * x[j];
    }
    let cap_res = cap.iter().map(|c| (c - 1.0).abs()).fold(0.0, f64::max);
    let flow_res = flow
        .iter()
        .zip(nu)
        .map(|(f, v)| (f - v).abs())
        .fold(0.0, f64::max);
    (cap_res, flow_res)
}

/// Buffer pools and their companion server pools, each sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BufferPools {
    pub buffers: Vec<Vec<usize>>,
    pub servers: Vec<Vec<usize>>,
}

struct DisjointSets {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl DisjointSets {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            size: vec![1; n],
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        if self.size[ra] < self.size[rb] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb] = ra;
        self.size[ra] += self.size[rb];
    }
}

/// Partition buffers into classes that communicate through basic activities
/// sharing a server. Pools are ordered by their smallest buffer.
pub fn buffer_pools(model: &NetworkModel, basic: &[usize]) -> BufferPools {
    let i_count = model.num_regions;
    let mut sets = DisjointSets::new(i_count);
    let mut first_buffer_of_server: Vec<Option<usize>> = vec![None; i_count];
    for &j in basic {
        let act = model.activities[j];
        match first_buffer_of_server[act.server] {
            Some(b) => sets.union(b, act.buffer),
            None => first_buffer_of_server[act.server] = Some(act.buffer),
        }
    }
    let mut root_to_pool: Vec<Option<usize>> = vec![None; i_count];
    let mut buffers: Vec<Vec<usize>> = Vec::new();
    for i in 0..i_count {
        let root = sets.find(i);
        let l = *root_to_pool[root].get_or_insert_with(|| {
            buffers.push(Vec::new());
            buffers.len() - 1
        });
        buffers[l].push(i);
    }
    let mut servers = vec![Vec::new(); buffers.len()];
    for &j in basic {
        let act = model.activities[j];
        let l = root_to_pool[sets.find(act.buffer)].expect("every buffer is pooled");
        if !servers[l].contains(&act.server) {
            servers[l].push(act.server);
        }
    }
    for s in servers.iter_mut() {
        s.sort_unstable();
    }
    BufferPools { buffers, servers }
}

/// Canonical workload matrix: row `l` is the indicator of pool `l`.
pub fn workload_matrix(pools: &BufferPools, num_regions: usize) -> DMatrix<f64> {
    DMatrix::from_fn(pools.buffers.len(), num_regions, |l, i| {
        if pools.buffers[l].contains(&i) {
            1.0
        } else {
            0.0
        }
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CrpCheck {
    pub holds: bool,
    pub diagnostics: Vec<String>,
}

/// Complete resource pooling holds iff there is a single buffer pool.
pub fn check_crp(pools: &BufferPools) -> CrpCheck {
    if pools.buffers.len() == 1 {
        return CrpCheck {
            holds: true,
            diagnostics: Vec::new(),
        };
    }
    let diagnostics = pools
        .buffers
        .iter()
        .zip(&pools.servers)
        .enumerate()
        .map(|(l, (b, s))| {
            let one_based = |v: &Vec<usize>| {
                v.iter()
                    .map(|i| (i + 1).to_string())
                    .collect::<Vec<_>>()
                    .join(",")
            };
            format!(
                "pool {}: buffers {{{}}} servers {{{}}}",
                l + 1,
                one_based(b),
                one_based(s)
            )
        })
        .collect();
    CrpCheck {
        holds: false,
        diagnostics,
    }
}
