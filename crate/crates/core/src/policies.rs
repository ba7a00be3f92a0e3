//! Pricing and dispatch rules. Both are pure functions of the buffer counts
//! (and an rng for the randomized split), so the simulator can call them
//! after every event.

use rand::Rng;

use crate::bellman::ValueFunction;
use crate::diffusion::EwfParams;
use crate::model::{Activity, DispatchKind, EconParams, NetworkModel, PricingKind};
use crate::static_plan::StaticPlan;

/// Demand rates and prices as functions of the total buffer headcount `W`,
/// tabulated for `W = 0..=n`.
#[derive(Debug, Clone)]
pub struct PricingPolicy {
    pub kind: PricingKind,
    regions: usize,
    rates: Vec<f64>,
    prices: Vec<f64>,
    expansion: Vec<f64>,
}

impl PricingPolicy {
    pub fn fixed(plan: &StaticPlan, econ: &EconParams, n: u64) -> Self {
        Self::tabulate(PricingKind::Static, plan, econ, &[], n, |_| 0.0)
    }

    pub fn dynamic(
        plan: &StaticPlan,
        econ: &EconParams,
        ewf: &EwfParams,
        vf: &ValueFunction,
        n: u64,
    ) -> Self {
        let sqrt_n = (n as f64).sqrt();
        Self::tabulate(PricingKind::Dynamic, plan, econ, &ewf.alpha, n, |w| {
            vf.value(w as f64 / sqrt_n)
        })
    }

    /// Dynamic rule driven by an arbitrary `v`, evaluated at `W/√n`.
    pub fn dynamic_with(
        plan: &StaticPlan,
        econ: &EconParams,
        alpha: &[f64],
        n: u64,
        v: impl Fn(f64) -> f64,
    ) -> Self {
        let sqrt_n = (n as f64).sqrt();
        Self::tabulate(PricingKind::Dynamic, plan, econ, alpha, n, |w| {
            v(w as f64 / sqrt_n)
        })
    }

    fn tabulate(
        kind: PricingKind,
        plan: &StaticPlan,
        econ: &EconParams,
        alpha: &[f64],
        n: u64,
        v_at: impl Fn(u64) -> f64,
    ) -> Self {
        let regions = plan.lambda_star.len();
        let nf = n as f64;
        let sqrt_n = nf.sqrt();
        let size = (n as usize + 1) * regions;
        let mut rates = Vec::with_capacity(size);
        let mut prices = Vec::with_capacity(size);
        let mut expansion = Vec::with_capacity(size);
        for w in 0..=n {
            let v = match kind {
                PricingKind::Static => 0.0,
                PricingKind::Dynamic => v_at(w),
            };
            for i in 0..regions {
                let base = nf * plan.lambda_star[i];
                let (rate, exp_price) = match kind {
                    PricingKind::Static => (base, plan.p_star[i]),
                    PricingKind::Dynamic => {
                        let raw = base + sqrt_n * v / (2.0 * alpha[i]);
                        // Λ⁻¹ has slope −1/b_i at λ*.
                        let first_order =
                            plan.p_star[i] - v / (2.0 * alpha[i] * econ.demand_b[i] * sqrt_n);
                        (raw.clamp(0.01 * base, nf * econ.demand_a[i]), first_order)
                    }
                };
                let price = match kind {
                    PricingKind::Static => plan.p_star[i],
                    PricingKind::Dynamic => econ.inverse_unchecked(i, rate / nf),
                };
                rates.push(rate);
                prices.push(price);
                expansion.push(exp_price);
            }
        }
        Self {
            kind,
            regions,
            rates,
            prices,
            expansion,
        }
    }

    /// `(prices, demand rates)` of the `n`-car system at headcount `w`.
    #[inline]
    pub fn current_prices(&self, w: u64) -> (&[f64], &[f64]) {
        let k = w as usize * self.regions;
        (
            &self.prices[k..k + self.regions],
            &self.rates[k..k + self.regions],
        )
    }

    /// First-order price expansion around `p*`, for comparison with the
    /// exact inverse.
    pub fn expansion_prices(&self, w: u64) -> &[f64] {
        let k = w as usize * self.regions;
        &self.expansion[k..k + self.regions]
    }

    pub fn max_headcount(&self) -> u64 {
        (self.rates.len() / self.regions - 1) as u64
    }
}

/// Static data the dispatch rules need.
#[derive(Debug, Clone)]
pub struct DispatchContext {
    pub kind: DispatchKind,
    pub activities: Vec<Activity>,
    pub basic: Vec<bool>,
    server_acts: Vec<Vec<usize>>,
    buffer_acts: Vec<Vec<usize>>,
    /// Holding cost per buffer.
    pub h: Vec<f64>,
    /// Effective idling cost `c_s/λ*_s` per server, with `c` on the diffusion scale.
    pub idle_cost: Vec<f64>,
    pub safety_stock: Vec<u32>,
    /// `x*_j`, the split weights.
    pub weights: Vec<f64>,
    pub distances: Vec<Vec<f64>>,
}

impl DispatchContext {
    pub fn new(
        kind: DispatchKind,
        model: &NetworkModel,
        econ: &EconParams,
        plan: &StaticPlan,
        safety_stock: u32,
    ) -> Self {
        let regions = model.num_regions;
        let server_acts = (0..regions).map(|s| model.server_activities(s).collect()).collect();
        let buffer_acts = (0..regions).map(|b| model.buffer_activities(b).collect()).collect();
        Self {
            kind,
            activities: model.activities.clone(),
            basic: (0..model.num_activities()).map(|j| plan.is_basic(j)).collect(),
            server_acts,
            buffer_acts,
            h: econ.h.clone(),
            idle_cost: econ
                .c
                .iter()
                .zip(&plan.lambda_star)
                .map(|(c, l)| c / model.sqrt_n() / l)
                .collect(),
            safety_stock: vec![safety_stock; regions],
            weights: plan.x_star.clone(),
            distances: model.distances.clone(),
        }
    }

    pub fn num_servers(&self) -> usize {
        self.server_acts.len()
    }

    /// Activity for a server that just became free, or `None` to idle.
    /// `waiting[b]` counts jobs in buffer `b` not already in service.
    pub fn select(&self, waiting: &[u32], server: usize, rng: &mut impl Rng) -> Option<usize> {
        match self.kind {
            DispatchKind::Dp1 => dp1_on_server_idle(self, waiting, server),
            DispatchKind::Dp2 => dp2_select(self, waiting, server),
            DispatchKind::Static => static_split_select(self, waiting, server, rng),
            DispatchKind::Closest => closest_driver_select(self, waiting, server),
        }
    }

    /// Whether `select` would find work for `server`; the randomized split
    /// only decides which buffer, never whether.
    pub fn has_work(&self, waiting: &[u32], server: usize) -> bool {
        self.server_acts[server].iter().any(|&j| {
            let b = self.activities[j].buffer;
            match self.kind {
                DispatchKind::Dp1 => self.dp1_eligible(waiting, j),
                DispatchKind::Static => self.basic[j] && waiting[b] > 0,
                DispatchKind::Dp2 | DispatchKind::Closest => waiting[b] > 0,
            }
        })
    }

    /// Activity to start on an idle server after a job joined `buffer`.
    pub fn on_arrival(
        &self,
        waiting: &[u32],
        idle: &[bool],
        buffer: usize,
        rng: &mut impl Rng,
    ) -> Option<usize> {
        if waiting[buffer] == 0 {
            return None;
        }
        match self.kind {
            DispatchKind::Dp1 => dp1_on_buffer_reaches_stock(self, waiting, idle, buffer),
            DispatchKind::Dp2 => {
                let acts = &self.buffer_acts[buffer];
                let idle_act = |j: &&usize| idle[self.activities[**j].server];
                acts.iter()
                    .filter(idle_act)
                    .find(|&&j| self.activities[j].is_local())
                    .or_else(|| acts.iter().filter(idle_act).find(|&&j| self.basic[j]))
                    .or_else(|| acts.iter().find(idle_act))
                    .copied()
            }
            DispatchKind::Static => {
                let cand: Vec<usize> = self.buffer_acts[buffer]
                    .iter()
                    .copied()
                    .filter(|&j| self.basic[j] && idle[self.activities[j].server])
                    .collect();
                weighted_pick(&cand, &self.weights, rng)
            }
            DispatchKind::Closest => {
                let mut best: Option<(usize, f64)> = None;
                for &j in &self.buffer_acts[buffer] {
                    let s = self.activities[j].server;
                    if !idle[s] {
                        continue;
                    }
                    let d = self.distances[s][buffer];
                    if best.map_or(true, |(_, bd)| d < bd) {
                        best = Some((j, d));
                    }
                }
                best.map(|(j, _)| j)
            }
        }
    }

    fn dp1_eligible(&self, waiting: &[u32], j: usize) -> bool {
        let act = self.activities[j];
        if !self.basic[j] {
            return false;
        }
        let need = if act.is_local() {
            1
        } else {
            self.safety_stock[act.buffer].max(1)
        };
        waiting[act.buffer] >= need
    }
}

/// Among the server's basic activities whose buffer holds its safety stock
/// (any waiting job for the server's own buffer), the buffer with the
/// largest holding cost; ties go to the local buffer, then the longest
/// queue, then the lowest index.
pub fn dp1_on_server_idle(ctx: &DispatchContext, waiting: &[u32], server: usize) -> Option<usize> {
    let mut best: Option<(usize, f64, bool, u32)> = None;
    for &j in &ctx.server_acts[server] {
        if !ctx.dp1_eligible(waiting, j) {
            continue;
        }
        let act = ctx.activities[j];
        let h = ctx.h[act.buffer];
        let local = act.is_local();
        let q = waiting[act.buffer];
        let better = match best {
            None => true,
            Some((_, bh, blocal, bq)) => {
                h > bh || (h == bh && (local, q) > (blocal, bq))
            }
        };
        if better {
            best = Some((j, h, local, q));
        }
    }
    best.map(|(j, ..)| j)
}

/// Among idle servers with an eligible basic activity into `buffer`, the one
/// with the largest effective idling cost.
pub fn dp1_on_buffer_reaches_stock(
    ctx: &DispatchContext,
    waiting: &[u32],
    idle: &[bool],
    buffer: usize,
) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for &j in &ctx.buffer_acts[buffer] {
        let s = ctx.activities[j].server;
        if !idle[s] || !ctx.dp1_eligible(waiting, j) {
            continue;
        }
        let cost = ctx.idle_cost[s];
        if best.map_or(true, |(bj, bc)| {
            cost > bc || (cost == bc && s < ctx.activities[bj].server)
        }) {
            best = Some((j, cost));
        }
    }
    best.map(|(j, _)| j)
}

fn longest(ctx: &DispatchContext, waiting: &[u32], acts: impl Iterator<Item = usize>) -> Option<usize> {
    let mut best: Option<(usize, u32)> = None;
    for j in acts {
        let b = ctx.activities[j].buffer;
        let q = waiting[b];
        if q == 0 {
            continue;
        }
        if best.map_or(true, |(bj, bq)| q > bq || (q == bq && b < ctx.activities[bj].buffer)) {
            best = Some((j, q));
        }
    }
    best.map(|(j, _)| j)
}

/// Local buffer first, then the longest basic buffer, then the longest
/// nonbasic buffer.
pub fn dp2_select(ctx: &DispatchContext, waiting: &[u32], server: usize) -> Option<usize> {
    let acts = &ctx.server_acts[server];
    if let Some(&j) = acts
        .iter()
        .find(|&&j| ctx.activities[j].is_local() && waiting[ctx.activities[j].buffer] > 0)
    {
        return Some(j);
    }
    longest(ctx, waiting, acts.iter().copied().filter(|&j| ctx.basic[j]))
        .or_else(|| longest(ctx, waiting, acts.iter().copied().filter(|&j| !ctx.basic[j])))
}

fn weighted_pick(cand: &[usize], weights: &[f64], rng: &mut impl Rng) -> Option<usize> {
    match cand {
        [] => None,
        [j] => Some(*j),
        _ => {
            let total: f64 = cand.iter().map(|&j| weights[j]).sum();
            let mut u = rng.gen::<f64>() * total;
            for &j in cand {
                u -= weights[j];
                if u < 0.0 {
                    return Some(j);
                }
            }
            cand.last().copied()
        }
    }
}

/// Random choice among the server's basic activities with waiting jobs,
/// proportional to `x*_j`.
pub fn static_split_select(
    ctx: &DispatchContext,
    waiting: &[u32],
    server: usize,
    rng: &mut impl Rng,
) -> Option<usize> {
    let mut cand = [0usize; 8];
    let mut len = 0;
    let mut spill = Vec::new();
    for &j in &ctx.server_acts[server] {
        if ctx.basic[j] && waiting[ctx.activities[j].buffer] > 0 {
            if len < cand.len() {
                cand[len] = j;
                len += 1;
            } else {
                spill.push(j);
            }
        }
    }
    if spill.is_empty() {
        weighted_pick(&cand[..len], &ctx.weights, rng)
    } else {
        let mut all = cand.to_vec();
        all.extend(spill);
        weighted_pick(&all, &ctx.weights, rng)
    }
}

/// Nearest buffer with waiting jobs; the zero diagonal puts the local buffer
/// first.
pub fn closest_driver_select(ctx: &DispatchContext, waiting: &[u32], server: usize) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for &j in &ctx.server_acts[server] {
        let b = ctx.activities[j].buffer;
        if waiting[b] == 0 {
            continue;
        }
        let d = ctx.distances[server][b];
        if best.map_or(true, |(bj, bd)| d < bd || (d == bd && b < ctx.activities[bj].buffer)) {
            best = Some((j, d));
        }
    }
    best.map(|(j, _)| j)
}
