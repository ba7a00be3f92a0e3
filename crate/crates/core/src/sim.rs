//! Event-by-event simulation of the closed network under a pricing and
//! dispatch policy pair.
//!
//! Time runs on an integer clock of `2^-40` hours so that areas under the
//! count processes, busy time and idle time are exact integers.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bellman::{solve_bellman, BellmanParams, SolverOptions, ValueFunction};
use crate::diffusion::EwfParams;
use crate::error::{Error, Result};
use crate::model::{Discipline, DispatchKind, EconParams, NetworkModel, PricingKind};
use crate::policies::{DispatchContext, PricingPolicy};
use crate::static_plan::{nominal_plan, StaticPlan};
use crate::stats::mean_ci95;

pub const TICKS_PER_HOUR: u64 = 1 << 40;

pub fn hours_to_ticks(h: f64) -> u64 {
    (h * TICKS_PER_HOUR as f64).round() as u64
}

pub fn ticks_to_hours(t: u128) -> f64 {
    t as f64 / TICKS_PER_HOUR as f64
}

#[derive(Debug, Clone)]
pub struct Policies {
    pub pricing: PricingPolicy,
    pub dispatch: DispatchContext,
    pub discipline: Discipline,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Event {
    /// A car from the activity's buffer got matched with a rider at `server`.
    Service { server: usize, activity: usize },
    /// A trip ended and the car joined `buffer`.
    Travel { buffer: usize },
}

/// Quantities integrated over the accounting window.
#[derive(Debug, Clone, PartialEq)]
pub struct Accounts {
    pub revenue: f64,
    pub served: Vec<u64>,
    pub arrivals: Vec<u64>,
    /// `∫ Q_i dt` in car-ticks.
    pub buffer_area: Vec<u128>,
    pub travel_area: u128,
    /// Matches made through each activity.
    pub matches: Vec<u64>,
    /// Time each activity held a reserved car; committed discipline only.
    pub activity_ticks: Vec<u64>,
    pub busy_ticks: Vec<u64>,
    pub idle_ticks: Vec<u64>,
    pub elapsed: u64,
    pub events: u64,
}

impl Accounts {
    fn zero(regions: usize, activities: usize) -> Self {
        Self {
            revenue: 0.0,
            served: vec![0; regions],
            arrivals: vec![0; regions],
            buffer_area: vec![0; regions],
            travel_area: 0,
            matches: vec![0; activities],
            activity_ticks: vec![0; activities],
            busy_ticks: vec![0; regions],
            idle_ticks: vec![0; regions],
            elapsed: 0,
            events: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    /// Clock in ticks.
    pub t: u64,
    /// Cars per buffer, including any reserved by a server.
    pub q: Vec<u32>,
    /// Cars traveling.
    pub q0: u32,
    pub assignment: Vec<Option<usize>>,
    pub in_service: Vec<u32>,
    pub waiting: Vec<u32>,
    pub idle: Vec<bool>,
    /// `Σ_i Q_i`.
    pub w: u32,
    pub acc: Accounts,
}

impl SimState {
    /// Every car traveling, every server idle.
    pub fn initial(model: &NetworkModel) -> Self {
        let regions = model.num_regions;
        Self {
            t: 0,
            q: vec![0; regions],
            q0: model.n as u32,
            assignment: vec![None; regions],
            in_service: vec![0; regions],
            waiting: vec![0; regions],
            idle: vec![true; regions],
            w: 0,
            acc: Accounts::zero(regions, model.num_activities()),
        }
    }

    pub fn check(&self, model: &NetworkModel, policies: &Policies) -> Result<()> {
        let total: u64 = self.q0 as u64 + self.q.iter().map(|&x| x as u64).sum::<u64>();
        if total != model.n {
            return Err(Error::Numerical(format!("job count {total} != {}", model.n)));
        }
        if self.w as u64 + self.q0 as u64 != model.n {
            return Err(Error::Numerical("workload out of sync".into()));
        }
        for b in 0..self.q.len() {
            if self.in_service[b] + self.waiting[b] != self.q[b] {
                return Err(Error::Numerical(format!("buffer {b} counts out of sync")));
            }
            let serving = self
                .assignment
                .iter()
                .flatten()
                .filter(|&&j| model.activities[j].buffer == b)
                .count();
            if serving as u32 != self.in_service[b] {
                return Err(Error::Numerical(format!("buffer {b} service count")));
            }
        }
        for (s, a) in self.assignment.iter().enumerate() {
            let idle = match policies.discipline {
                Discipline::Committed => a.is_none(),
                Discipline::Matching => {
                    if a.is_some() {
                        return Err(Error::Numerical(format!("server {s} holds a car")));
                    }
                    !policies.dispatch.has_work(&self.waiting, s)
                }
            };
            if idle != self.idle[s] {
                return Err(Error::Numerical(format!("server {s} idle flag")));
            }
            if let Some(j) = a {
                if model.activities[*j].server != s {
                    return Err(Error::Numerical(format!("server {s} on foreign activity")));
                }
            }
        }
        Ok(())
    }
}

pub struct Simulator<'a> {
    model: &'a NetworkModel,
    policies: &'a Policies,
    route_cdf: Vec<f64>,
    pub state: SimState,
}

impl<'a> Simulator<'a> {
    pub fn new(model: &'a NetworkModel, policies: &'a Policies) -> Self {
        let total: f64 = model.q.iter().sum();
        let mut acc = 0.0;
        let route_cdf = model
            .q
            .iter()
            .map(|q| {
                acc += q / total;
                acc
            })
            .collect();
        Self {
            model,
            policies,
            route_cdf,
            state: SimState::initial(model),
        }
    }

    /// Start the accounting window at the current time.
    pub fn reset_accounts(&mut self) {
        self.state.acc = Accounts::zero(self.model.num_regions, self.model.num_activities());
    }

    fn advance(&mut self, to: u64) {
        let st = &mut self.state;
        let dt = to - st.t;
        if dt == 0 {
            return;
        }
        let acc = &mut st.acc;
        for (area, &q) in acc.buffer_area.iter_mut().zip(&st.q) {
            *area += q as u128 * dt as u128;
        }
        acc.travel_area += st.q0 as u128 * dt as u128;
        for (s, &idle) in st.idle.iter().enumerate() {
            if idle {
                acc.idle_ticks[s] += dt;
            } else {
                acc.busy_ticks[s] += dt;
            }
        }
        for j in st.assignment.iter().flatten() {
            acc.activity_ticks[*j] += dt;
        }
        acc.elapsed += dt;
        st.t = to;
    }

    /// Next event, if it happens before `limit`; otherwise the clock stops at
    /// `limit` and the drawn event is discarded.
    pub fn step_before(&mut self, limit: u64, rng: &mut impl Rng) -> Option<Event> {
        let (prices, rates) = self.policies.pricing.current_prices(self.state.w as u64);
        let travel_rate = self.model.eta_n * self.state.q0 as f64;
        let mut total = travel_rate;
        for (s, &idle) in self.state.idle.iter().enumerate() {
            if !idle {
                total += rates[s];
            }
        }
        if !(total > 0.0) {
            if limit != u64::MAX {
                self.advance(limit);
            }
            return None;
        }
        let e: f64 = rng.sample(Exp1);
        let next = self.state.t.saturating_add(hours_to_ticks(e / total));
        if next >= limit {
            self.advance(limit);
            return None;
        }
        self.advance(next);

        let mut u = rng.gen::<f64>() * total;
        let mut pick = None;
        let mut last_busy = None;
        for (s, &idle) in self.state.idle.iter().enumerate() {
            if !idle {
                last_busy = Some(s);
                if u < rates[s] {
                    pick = Some(s);
                    break;
                }
                u -= rates[s];
            }
        }
        if pick.is_none() && self.state.q0 == 0 {
            pick = last_busy;
        }
        self.state.acc.events += 1;
        Some(match pick {
            Some(server) => {
                let price = prices[server];
                let activity = match self.state.assignment[server] {
                    Some(j) => j,
                    None => self
                        .policies
                        .dispatch
                        .select(&self.state.waiting, server, rng)
                        .expect("busy server has an eligible buffer"),
                };
                self.serve(server, activity, price, rng);
                Event::Service { server, activity }
            }
            None => {
                let v = rng.gen::<f64>();
                let buffer = self
                    .route_cdf
                    .iter()
                    .position(|&c| v < c)
                    .unwrap_or(self.route_cdf.len() - 1);
                self.arrive(buffer, rng);
                Event::Travel { buffer }
            }
        })
    }

    pub fn step(&mut self, rng: &mut impl Rng) -> Option<Event> {
        self.step_before(u64::MAX, rng)
    }

    fn start(&mut self, activity: usize) {
        let act = self.model.activities[activity];
        let st = &mut self.state;
        st.assignment[act.server] = Some(activity);
        st.idle[act.server] = false;
        st.in_service[act.buffer] += 1;
        st.waiting[act.buffer] -= 1;
    }

    fn refresh_idle(&mut self) {
        let st = &mut self.state;
        for (s, idle) in st.idle.iter_mut().enumerate() {
            *idle = !self.policies.dispatch.has_work(&st.waiting, s);
        }
    }

    fn serve(&mut self, server: usize, activity: usize, price: f64, rng: &mut impl Rng) {
        let b = self.model.activities[activity].buffer;
        let st = &mut self.state;
        st.acc.revenue += price;
        st.acc.served[server] += 1;
        st.acc.matches[activity] += 1;
        st.q[b] -= 1;
        st.q0 += 1;
        st.w -= 1;
        match self.policies.discipline {
            Discipline::Matching => {
                st.waiting[b] -= 1;
                self.refresh_idle();
            }
            Discipline::Committed => {
                st.in_service[b] -= 1;
                st.assignment[server] = None;
                st.idle[server] = true;
                if let Some(j) = self.policies.dispatch.select(&st.waiting, server, rng) {
                    self.start(j);
                }
            }
        }
    }

    fn arrive(&mut self, buffer: usize, rng: &mut impl Rng) {
        let st = &mut self.state;
        st.q0 -= 1;
        st.q[buffer] += 1;
        st.waiting[buffer] += 1;
        st.w += 1;
        st.acc.arrivals[buffer] += 1;
        match self.policies.discipline {
            Discipline::Matching => self.refresh_idle(),
            Discipline::Committed => {
                if let Some(j) = self
                    .policies
                    .dispatch
                    .on_arrival(&st.waiting, &st.idle, buffer, rng)
                {
                    self.start(j);
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub seed: u64,
    pub horizon: f64,
    pub warmup: f64,
    /// Normalized cost rate, $/h.
    pub avg_cost: f64,
    /// `avg_cost` plus the explicit idleness charge `Σ c_i·idle_i / T`.
    pub avg_cost_with_idleness: f64,
    pub avg_profit_rate: f64,
    pub revenue: f64,
    pub holding: f64,
    pub idle_charge: f64,
    pub served: Vec<u64>,
    pub arrivals: Vec<u64>,
    pub idle_fraction: Vec<f64>,
    pub mean_queue: Vec<f64>,
    pub mean_workload: f64,
    pub traveling_fraction: f64,
    pub events: u64,
}

/// `nπ(λ*) − n·h0`: the profit rate the network would earn if every
/// region's demand were met at the static optimum with all cars traveling.
pub fn centering_rate(model: &NetworkModel, econ: &EconParams, plan: &StaticPlan) -> f64 {
    let n = model.n as f64;
    let pi: f64 = plan
        .lambda_star
        .iter()
        .zip(&plan.p_star)
        .map(|(l, p)| l * p)
        .sum();
    n * pi - n * econ.h0
}

fn report(
    model: &NetworkModel,
    econ: &EconParams,
    plan: &StaticPlan,
    acc: &Accounts,
    seed: u64,
    horizon: f64,
    warmup: f64,
) -> SimReport {
    let span = ticks_to_hours(acc.elapsed as u128);
    let holding = econ.h0 * ticks_to_hours(acc.travel_area)
        + acc
            .buffer_area
            .iter()
            .zip(&econ.h)
            .map(|(&a, h)| h * ticks_to_hours(a))
            .sum::<f64>();
    let idle_hours: Vec<f64> = acc
        .idle_ticks
        .iter()
        .map(|&t| ticks_to_hours(t as u128))
        .collect();
    let idle_charge: f64 = idle_hours.iter().zip(&econ.c).map(|(i, c)| i * c).sum();
    let profit = (acc.revenue - holding) / span;
    let avg_cost = centering_rate(model, econ, plan) - profit;
    let area: u128 = acc.buffer_area.iter().sum();
    SimReport {
        seed,
        horizon,
        warmup,
        avg_cost,
        avg_cost_with_idleness: avg_cost + idle_charge / span,
        avg_profit_rate: profit,
        revenue: acc.revenue,
        holding,
        idle_charge,
        served: acc.served.clone(),
        arrivals: acc.arrivals.clone(),
        idle_fraction: idle_hours.iter().map(|i| i / span).collect(),
        mean_queue: acc
            .buffer_area
            .iter()
            .map(|&a| ticks_to_hours(a) / span)
            .collect(),
        mean_workload: ticks_to_hours(area) / span,
        traveling_fraction: ticks_to_hours(acc.travel_area) / span / model.n as f64,
        events: acc.events,
    }
}

/// One replication from the all-traveling state; statistics cover
/// `(warmup, horizon]` only.
pub fn run_replication(
    model: &NetworkModel,
    econ: &EconParams,
    plan: &StaticPlan,
    policies: &Policies,
    horizon: f64,
    warmup: f64,
    seed: u64,
) -> Result<SimReport> {
    if !(warmup >= 0.0 && horizon > warmup && horizon.is_finite()) {
        return Err(Error::Domain {
            what: "horizon",
            value: horizon,
            lo: warmup.max(0.0),
            hi: f64::INFINITY,
        });
    }
    if policies.pricing.max_headcount() < model.n {
        return Err(Error::Argument("pricing table smaller than the fleet".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sim = Simulator::new(model, policies);
    let warm = hours_to_ticks(warmup);
    let end = hours_to_ticks(horizon);
    while sim.state.t < warm {
        sim.step_before(warm, &mut rng);
    }
    sim.reset_accounts();
    while sim.state.t < end {
        sim.step_before(end, &mut rng);
    }
    Ok(report(model, econ, plan, &sim.state.acc, seed, horizon, warmup))
}

/// Model, plan and value function shared by every policy cell.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub model: NetworkModel,
    pub econ: EconParams,
    pub plan: StaticPlan,
    pub ewf: EwfParams,
    pub vf: ValueFunction,
}

impl Scenario {
    pub fn build(model: NetworkModel, econ: EconParams, opts: &SolverOptions) -> Result<Self> {
        let plan = nominal_plan(&model, &econ)?;
        let ewf = EwfParams::derive(&model, &econ, &plan)?;
        let vf = solve_bellman(&BellmanParams::from(&ewf), opts)?;
        Ok(Self {
            model,
            econ,
            plan,
            ewf,
            vf,
        })
    }

    pub fn pricing(&self, kind: PricingKind) -> PricingPolicy {
        match kind {
            PricingKind::Static => PricingPolicy::fixed(&self.plan, &self.econ, self.model.n),
            PricingKind::Dynamic => {
                PricingPolicy::dynamic(&self.plan, &self.econ, &self.ewf, &self.vf, self.model.n)
            }
        }
    }

    pub fn dispatch(&self, kind: DispatchKind, safety_stock: u32) -> DispatchContext {
        DispatchContext::new(kind, &self.model, &self.econ, &self.plan, safety_stock)
    }

    pub fn policies(
        &self,
        pricing: PricingKind,
        dispatch: DispatchKind,
        safety_stock: u32,
        discipline: Discipline,
    ) -> Policies {
        Policies {
            pricing: self.pricing(pricing),
            dispatch: self.dispatch(dispatch, safety_stock),
            discipline,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunSpec {
    pub horizon: f64,
    pub warmup: f64,
    pub reps: usize,
    pub base_seed: u64,
    pub safety_stock: u32,
    pub discipline: Discipline,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub pricing: PricingKind,
    pub dispatch: DispatchKind,
    pub mean: f64,
    pub half_width: f64,
    pub reports: Vec<SimReport>,
}

impl CellSummary {
    pub fn costs(&self) -> Vec<f64> {
        self.reports.iter().map(|r| r.avg_cost).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub cells: Vec<CellSummary>,
}

impl ExperimentSummary {
    pub fn cell(&self, pricing: PricingKind, dispatch: DispatchKind) -> Option<&CellSummary> {
        self.cells
            .iter()
            .find(|c| c.pricing == pricing && c.dispatch == dispatch)
    }
}

/// Every (pricing, dispatch) cell gets `reps` replications seeded
/// `base_seed + k`, so cells share random numbers replication by
/// replication. Results are merged in grid order regardless of threading.
pub fn run_experiment(
    scenario: &Scenario,
    grid: &[(PricingKind, DispatchKind)],
    spec: &RunSpec,
) -> Result<ExperimentSummary> {
    if spec.reps < 2 {
        return Err(Error::Argument(format!(
            "need at least 2 replications for a confidence interval, got {}",
            spec.reps
        )));
    }
    let pricing: Vec<_> = PricingKind::ALL
        .iter()
        .map(|&k| {
            grid.iter()
                .any(|c| c.0 == k)
                .then(|| scenario.pricing(k))
        })
        .collect();
    let policies: Vec<Policies> = grid
        .iter()
        .map(|&(p, d)| Policies {
            pricing: pricing[PricingKind::ALL.iter().position(|&k| k == p).unwrap()]
                .clone()
                .expect("tabulated above"),
            dispatch: scenario.dispatch(d, spec.safety_stock),
            discipline: spec.discipline,
        })
        .collect();
    let jobs: Vec<(usize, usize)> = (0..grid.len())
        .flat_map(|c| (0..spec.reps).map(move |k| (c, k)))
        .collect();
    let reports: Vec<SimReport> = jobs
        .par_iter()
        .map(|&(c, k)| {
            run_replication(
                &scenario.model,
                &scenario.econ,
                &scenario.plan,
                &policies[c],
                spec.horizon,
                spec.warmup,
                spec.base_seed.wrapping_add(k as u64),
            )
        })
        .collect::<Result<_>>()?;
    let mut cells = Vec::with_capacity(grid.len());
    for (c, chunk) in reports.chunks(spec.reps).enumerate() {
        let costs: Vec<f64> = chunk.iter().map(|r| r.avg_cost).collect();
        let (mean, half_width) = mean_ci95(&costs)?;
        cells.push(CellSummary {
            pricing: grid[c].0,
            dispatch: grid[c].1,
            mean,
            half_width,
            reports: chunk.to_vec(),
        });
    }
    Ok(ExperimentSummary { cells })
}

pub fn full_grid() -> Vec<(PricingKind, DispatchKind)> {
    DispatchKind::ALL
        .iter()
        .flat_map(|&d| PricingKind::ALL.iter().map(move |&p| (p, d)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{load_model, MANHATTAN_CONFIG};

    const BOTH: [Discipline; 2] = [Discipline::Matching, Discipline::Committed];

    fn manhattan(n: u64) -> Scenario {
        let (mut model, econ, _) = load_model(MANHATTAN_CONFIG).unwrap();
        model.n = n;
        Scenario::build(model, econ, &SolverOptions::default()).unwrap()
    }

    #[test]
    fn centering_example() {
        let s = manhattan(10_000);
        let pi: f64 = s.plan.lambda_star.iter().map(|l| 10.0 * l).sum();
        assert!((pi - 21.538).abs() < 1e-9);
        assert!((centering_rate(&s.model, &s.econ, &s.plan) - (215_380.0 - 10_000.0)).abs() < 1e-6);
    }

    #[test]
    fn conservation_and_time_accounting() {
        let s = manhattan(1000);
        for discipline in BOTH {
            for (pricing, dispatch) in [
                (PricingKind::Dynamic, DispatchKind::Dp1),
                (PricingKind::Static, DispatchKind::Static),
            ] {
                let pol = s.policies(pricing, dispatch, 1, discipline);
                let mut sim = Simulator::new(&s.model, &pol);
                let mut rng = ChaCha8Rng::seed_from_u64(3);
                let mut last_t = 0;
                for _ in 0..1_000_000 {
                    sim.step(&mut rng).unwrap();
                    let st = &sim.state;
                    assert!(st.t >= last_t);
                    last_t = st.t;
                    assert_eq!(st.q0 as u64 + st.q.iter().map(|&x| x as u64).sum::<u64>(), 1000);
                }
                sim.state.check(&s.model, &pol).unwrap();
                let acc = &sim.state.acc;
                assert_eq!(acc.events, 1_000_000);
                assert_eq!(acc.elapsed, sim.state.t);
                for srv in 0..4 {
                    assert_eq!(acc.busy_ticks[srv] + acc.idle_ticks[srv], sim.state.t);
                    let reserved: u64 = s
                        .model
                        .server_activities(srv)
                        .map(|j| acc.activity_ticks[j])
                        .sum();
                    match discipline {
                        Discipline::Committed => assert_eq!(reserved, acc.busy_ticks[srv]),
                        Discipline::Matching => assert_eq!(reserved, 0),
                    }
                    let matched: u64 = s.model.server_activities(srv).map(|j| acc.matches[j]).sum();
                    assert_eq!(matched, acc.served[srv]);
                }
                let area: u128 = acc.buffer_area.iter().sum::<u128>() + acc.travel_area;
                assert_eq!(area, 1000 * sim.state.t as u128);
            }
        }
    }

    #[test]
    fn state_stays_consistent_and_no_server_idles_with_work() {
        let s = manhattan(200);
        for discipline in BOTH {
            for dispatch in DispatchKind::ALL {
                let pol = s.policies(PricingKind::Dynamic, dispatch, 1, discipline);
                let mut sim = Simulator::new(&s.model, &pol);
                let mut rng = ChaCha8Rng::seed_from_u64(11);
                for _ in 0..50_000 {
                    sim.step(&mut rng).unwrap();
                    sim.state.check(&s.model, &pol).unwrap();
                    for srv in 0..4 {
                        if sim.state.idle[srv] {
                            assert!(!pol.dispatch.has_work(&sim.state.waiting, srv));
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn dp1_never_uses_nonbasic_activities() {
        let s = manhattan(500);
        for discipline in BOTH {
            let pol = s.policies(PricingKind::Dynamic, DispatchKind::Dp1, 1, discipline);
            let mut sim = Simulator::new(&s.model, &pol);
            let mut rng = ChaCha8Rng::seed_from_u64(4);
            for _ in 0..200_000 {
                sim.step(&mut rng);
            }
            for (j, &m) in sim.state.acc.matches.iter().enumerate() {
                assert_eq!(m > 0, s.plan.is_basic(j), "activity {j}: {m}");
            }
        }
    }

    #[test]
    fn same_seed_same_report() {
        let s = manhattan(500);
        for discipline in BOTH {
            let pol = s.policies(PricingKind::Dynamic, DispatchKind::Static, 1, discipline);
            let a = run_replication(&s.model, &s.econ, &s.plan, &pol, 30.0, 5.0, 42).unwrap();
            let b = run_replication(&s.model, &s.econ, &s.plan, &pol, 30.0, 5.0, 42).unwrap();
            assert_eq!(a, b);
            let c = run_replication(&s.model, &s.econ, &s.plan, &pol, 30.0, 5.0, 43).unwrap();
            assert_ne!(a.avg_cost, c.avg_cost);
        }
    }

    #[test]
    fn zero_velocity_dynamic_is_static() {
        let s = manhattan(500);
        for discipline in BOTH {
            let fixed = s.policies(PricingKind::Static, DispatchKind::Dp2, 1, discipline);
            let zero = Policies {
                pricing: PricingPolicy::dynamic_with(&s.plan, &s.econ, &s.ewf.alpha, 500, |_| 0.0),
                ..fixed.clone()
            };
            let a = run_replication(&s.model, &s.econ, &s.plan, &fixed, 40.0, 10.0, 9).unwrap();
            let b = run_replication(&s.model, &s.econ, &s.plan, &zero, 40.0, 10.0, 9).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn invalid_window() {
        let s = manhattan(100);
        let pol = s.policies(PricingKind::Static, DispatchKind::Dp2, 1, Discipline::Matching);
        assert!(run_replication(&s.model, &s.econ, &s.plan, &pol, 10.0, 10.0, 1).is_err());
        assert!(run_replication(&s.model, &s.econ, &s.plan, &pol, 10.0, -1.0, 1).is_err());
    }

    #[test]
    fn pricing_table_must_cover_fleet() {
        let s = manhattan(100);
        let small = s.policies(PricingKind::Static, DispatchKind::Dp2, 1, Discipline::Matching);
        let big = manhattan(200);
        assert!(run_replication(&big.model, &big.econ, &big.plan, &small, 10.0, 1.0, 1).is_err());
    }

    #[test]
    fn single_car_alternates() {
        // One region, one car: a two-state chain traveling ↔ waiting with
        // rates η and λ, so the car travels a fraction λ/(λ+η) of the time.
        let config = r#"{
            "regions": 1,
            "activities": [{"server": 1, "buffer": 1}],
            "q": [1.0],
            "eta_n": 2.0,
            "n": 1,
            "demand": {"mode": "pstar", "p_star": [10.0], "lambda_star": [1.0]},
            "costs": {"h0": 1.0, "h": [20.0], "c": [10.0]},
            "distances": [[0.0]],
            "sim": {"horizon_hours": 1.0, "warmup_hours": 0.0, "replications": 2, "seed": 1},
            "dispatch": {"policy": "dp2"},
            "pricing": "static"
        }"#;
        let (model, econ, _) = load_model(config).unwrap();
        let plan = nominal_plan(&model, &econ).unwrap();
        for discipline in BOTH {
            let pol = Policies {
                pricing: PricingPolicy::fixed(&plan, &econ, 1),
                dispatch: DispatchContext::new(DispatchKind::Dp2, &model, &econ, &plan, 1),
                discipline,
            };
            let mut sim = Simulator::new(&model, &pol);
            let mut rng = ChaCha8Rng::seed_from_u64(5);
            let mut expect_travel = true;
            for _ in 0..200_000 {
                let ev = sim.step(&mut rng).unwrap();
                match ev {
                    Event::Travel { .. } => assert!(expect_travel),
                    Event::Service { .. } => assert!(!expect_travel),
                }
                expect_travel = !expect_travel;
            }
            let acc = &sim.state.acc;
            let frac = acc.travel_area as f64 / acc.elapsed as f64;
            let expect = 1.0 / (1.0 + 2.0);
            assert!((frac - expect).abs() < 0.01, "{frac} vs {expect}");
            assert_eq!(acc.revenue, 10.0 * acc.served[0] as f64);
            assert_eq!(acc.idle_ticks[0] as u128 + acc.buffer_area[0], acc.elapsed as u128);
        }
    }

    #[test]
    fn flow_balance_and_travel_share() {
        let s = manhattan(10_000);
        for discipline in BOTH {
            for dispatch in [DispatchKind::Dp2, DispatchKind::Closest] {
                let pol = s.policies(PricingKind::Static, dispatch, 1, discipline);
                let r = run_replication(&s.model, &s.econ, &s.plan, &pol, 60.0, 10.0, 2).unwrap();
                let served: u64 = r.served.iter().sum();
                let arrived: u64 = r.arrivals.iter().sum();
                let gap = (served as f64 - arrived as f64).abs() / arrived as f64;
                assert!(gap < 0.02, "{served} vs {arrived}");
                // No idling pins the workload at n − nΣλ*/η ≈ 523, so the
                // travel share sits just below 0.95 under static prices.
                assert!(r.traveling_fraction > 0.94, "{}", r.traveling_fraction);
                let dynamic = s.policies(PricingKind::Dynamic, dispatch, 1, discipline);
                let r = run_replication(&s.model, &s.econ, &s.plan, &dynamic, 60.0, 10.0, 2).unwrap();
                assert!(r.traveling_fraction > 0.99, "{}", r.traveling_fraction);
            }
        }
    }

    #[test]
    fn experiment_is_deterministic_and_needs_two_reps() {
        let s = manhattan(300);
        let grid = [(PricingKind::Static, DispatchKind::Dp1), (PricingKind::Dynamic, DispatchKind::Dp1)];
        let spec = RunSpec {
            horizon: 20.0,
            warmup: 5.0,
            reps: 3,
            base_seed: 100,
            safety_stock: 1,
            discipline: Discipline::Matching,
        };
        let a = run_experiment(&s, &grid, &spec).unwrap();
        let b = run_experiment(&s, &grid, &spec).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.cells.len(), 2);
        let seeds: Vec<u64> = a.cells[1].reports.iter().map(|r| r.seed).collect();
        assert_eq!(seeds, [100, 101, 102]);
        let pol = s.policies(PricingKind::Dynamic, DispatchKind::Dp1, 1, Discipline::Matching);
        let single = run_replication(&s.model, &s.econ, &s.plan, &pol, 20.0, 5.0, 101).unwrap();
        assert_eq!(a.cells[1].reports[1], single);
        assert!(run_experiment(&s, &grid, &RunSpec { reps: 1, ..spec }).is_err());
    }
}
