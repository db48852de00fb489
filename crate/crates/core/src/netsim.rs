//! Discrete-event simulation of infinite-server networks fed by shot-noise
//! Cox arrivals, and the reduction of feedforward networks to parallel tandems.
//!
//! Every job samples its whole route and all its service times at admission.
//! With infinite servers there is no waiting, so a replication is just the
//! list of node visits `[enter, leave)` of all admitted jobs.

use std::collections::HashMap;
use std::io::{self, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coxarrivals::sample_thinning;
use crate::distributions::{Sample, ServiceLaw};
use crate::error::{Error, Result};
use crate::rng::{ReplicationStreams, RngStream};
use crate::shotnoise::{simulate_path, ShotNoisePath, ShotNoiseSpec};
use crate::stats::{mean_estimate, EstimateWithCI};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeSpec {
    pub id: String,
    pub service: ServiceLaw,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeSpec {
    pub from: String,
    pub to: String,
    pub probability: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceSpec {
    pub id: String,
    /// Entry node id.
    pub node: String,
    /// Index of the driving intensity component.
    #[serde(default)]
    pub component: usize,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dependence {
    /// One source.
    #[default]
    Single,
    /// Independent arrival streams per source given the (jointly jumping) intensities.
    M1,
    /// One arrival stream; every epoch admits a job at every source.
    M2,
}

/// A network of infinite-server nodes.
///
/// In loop mode (`loop_eta` set) the network has exactly two nodes, one
/// source entering the first node, and no explicit edges: jobs go from the
/// first node to the second, then return with probability `eta` or leave.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSpec {
    pub nodes: Vec<NodeSpec>,
    #[serde(default)]
    pub edges: Vec<EdgeSpec>,
    pub sources: Vec<SourceSpec>,
    #[serde(default)]
    pub dependence: Dependence,
    #[serde(default)]
    pub loop_eta: Option<f64>,
}

/// An ordered chain of nodes fed by one intensity component.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TandemSpec {
    pub services: Vec<ServiceLaw>,
    #[serde(default)]
    pub source: usize,
}

impl TandemSpec {
    pub fn new(services: Vec<ServiceLaw>, source: usize) -> Self {
        Self { services, source }
    }

    pub fn validate(&self) -> Result<()> {
        if self.services.is_empty() {
            return Err(Error::invalid("services", "a tandem needs at least one node"));
        }
        self.services.iter().try_for_each(ServiceLaw::validate)
    }
}

/// One source-to-exit path of a feedforward network.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DecomposedPath {
    pub source: usize,
    /// Node indices visited in order.
    pub nodes: Vec<usize>,
    pub tandem: TandemSpec,
    pub probability: f64,
}

const PROB_SLACK: f64 = 1e-12;

impl NetworkSpec {
    pub fn single_node(service: ServiceLaw) -> Self {
        Self::parallel_tandems(&[TandemSpec::new(vec![service], 0)], Dependence::Single)
    }

    /// Disjoint chains; node `j` of tandem `i` gets id `t{i}n{j}` and index
    /// equal to its position in the concatenation of all tandems.
    pub fn parallel_tandems(tandems: &[TandemSpec], dependence: Dependence) -> Self {
        let mut nodes = Vec::new();
        let mut edges = Vec::new();
        let mut sources = Vec::new();
        for (i, t) in tandems.iter().enumerate() {
            for (j, s) in t.services.iter().enumerate() {
                nodes.push(NodeSpec {
                    id: format!("t{i}n{j}"),
                    service: *s,
                });
                if j > 0 {
                    edges.push(EdgeSpec {
                        from: format!("t{i}n{}", j - 1),
                        to: format!("t{i}n{j}"),
                        probability: 1.0,
                    });
                }
            }
            sources.push(SourceSpec {
                id: format!("s{i}"),
                node: format!("t{i}n0"),
                component: t.source,
            });
        }
        Self {
            nodes,
            edges,
            sources,
            dependence,
            loop_eta: None,
        }
    }

    pub fn two_node_loop(eta: f64, service1: ServiceLaw, service2: ServiceLaw) -> Self {
        Self {
            nodes: vec![
                NodeSpec { id: "n1".into(), service: service1 },
                NodeSpec { id: "n2".into(), service: service2 },
            ],
            edges: vec![],
            sources: vec![SourceSpec {
                id: "s".into(),
                node: "n1".into(),
                component: 0,
            }],
            dependence: Dependence::Single,
            loop_eta: Some(eta),
        }
    }

    pub fn node_index(&self, id: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n.id == id)
    }

    /// Structural validation; `dim` is the number of intensity components if known.
    pub fn validate(&self, dim: Option<usize>) -> Result<()> {
        self.compile().map(|_| ())?;
        if let Some(d) = dim {
            for (i, s) in self.sources.iter().enumerate() {
                if s.component >= d {
                    return Err(Error::invalid(
                        format!("network.sources[{i}].component"),
                        format!("{} out of range for a {d}-component intensity", s.component),
                    ));
                }
            }
        }
        Ok(())
    }

    fn compile(&self) -> Result<Compiled> {
        if self.nodes.is_empty() {
            return Err(Error::invalid("network.nodes", "at least one node required"));
        }
        let mut index = HashMap::new();
        for (i, n) in self.nodes.iter().enumerate() {
            if index.insert(n.id.as_str(), i).is_some() {
                return Err(Error::invalid(format!("network.nodes[{i}].id"), format!("duplicate id `{}`", n.id)));
            }
            n.service
                .validate()
                .map_err(|e| prefix_error(e, &format!("network.nodes[{i}].service")))?;
        }
        if self.sources.is_empty() {
            return Err(Error::invalid("network.sources", "at least one source required"));
        }
        let mut sources = Vec::new();
        for (i, s) in self.sources.iter().enumerate() {
            let entry = *index
                .get(s.node.as_str())
                .ok_or_else(|| Error::invalid(format!("network.sources[{i}].node"), format!("unknown node `{}`", s.node)))?;
            sources.push((entry, s.component));
        }
        match self.dependence {
            Dependence::Single if sources.len() != 1 => {
                return Err(Error::invalid("network.dependence", "`single` requires exactly one source"));
            }
            Dependence::M2 if sources.iter().any(|s| s.1 != sources[0].1) => {
                return Err(Error::invalid(
                    "network.sources",
                    "model M2 requires every source to use the same intensity component",
                ));
            }
            _ => {}
        }
        let n = self.nodes.len();
        let mut out: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        if let Some(eta) = self.loop_eta {
            if !(0.0..1.0).contains(&eta) {
                return Err(Error::invalid("network.loop_eta", format!("must lie in [0, 1), got {eta}")));
            }
            if n != 2 || sources.len() != 1 || sources[0].0 != 0 || !self.edges.is_empty() {
                return Err(Error::invalid(
                    "network.loop_eta",
                    "loop mode needs two nodes, one source at the first node and no explicit edges",
                ));
            }
            out[0].push((1, 1.0));
            if eta > 0.0 {
                out[1].push((0, eta));
            }
        } else {
            for (k, e) in self.edges.iter().enumerate() {
                let field = format!("network.edges[{k}]");
                let from = *index
                    .get(e.from.as_str())
                    .ok_or_else(|| Error::invalid(format!("{field}.from"), format!("unknown node `{}`", e.from)))?;
                let to = *index
                    .get(e.to.as_str())
                    .ok_or_else(|| Error::invalid(format!("{field}.to"), format!("unknown node `{}`", e.to)))?;
                if !(0.0..=1.0).contains(&e.probability) {
                    return Err(Error::invalid(format!("{field}.probability"), "must lie in [0, 1]"));
                }
                out[from].push((to, e.probability));
            }
            for (i, o) in out.iter().enumerate() {
                let total: f64 = o.iter().map(|x| x.1).sum();
                if total > 1.0 + PROB_SLACK {
                    return Err(Error::invalid(
                        format!("network.nodes[{i}]"),
                        format!("outgoing routing probabilities of `{}` sum to {total} > 1", self.nodes[i].id),
                    ));
                }
            }
            if let Some(cycle) = find_cycle(&out) {
                return Err(Error::Cycle(cycle.into_iter().map(|i| self.nodes[i].id.clone()).collect()));
            }
        }
        Ok(Compiled {
            services: self.nodes.iter().map(|n| n.service).collect(),
            out,
            sources,
            dependence: self.dependence,
        })
    }
}

fn prefix_error(e: Error, prefix: &str) -> Error {
    match e {
        Error::InvalidParameter { field, reason } => Error::invalid(format!("{prefix}.{field}"), reason),
        other => other,
    }
}

fn find_cycle(out: &[Vec<(usize, f64)>]) -> Option<Vec<usize>> {
    // 0 = unvisited, 1 = on stack, 2 = done
    fn dfs(v: usize, out: &[Vec<(usize, f64)>], state: &mut [u8], stack: &mut Vec<usize>) -> Option<Vec<usize>> {
        state[v] = 1;
        stack.push(v);
        for &(w, _) in &out[v] {
            if state[w] == 1 {
                let start = stack.iter().position(|&x| x == w).unwrap();
                let mut cyc = stack[start..].to_vec();
                cyc.push(w);
                return Some(cyc);
            }
            if state[w] == 0 {
                if let Some(c) = dfs(w, out, state, stack) {
                    return Some(c);
                }
            }
        }
        stack.pop();
        state[v] = 2;
        None
    }
    let mut state = vec![0u8; out.len()];
    for v in 0..out.len() {
        if state[v] == 0 {
            if let Some(c) = dfs(v, out, &mut state, &mut Vec::new()) {
                return Some(c);
            }
        }
    }
    None
}

#[derive(Clone, Debug)]
struct Compiled {
    services: Vec<ServiceLaw>,
    out: Vec<Vec<(usize, f64)>>,
    sources: Vec<(usize, usize)>,
    dependence: Dependence,
}

impl Compiled {
    fn exit_probability(&self, node: usize) -> f64 {
        (1.0 - self.out[node].iter().map(|x| x.1).sum::<f64>()).max(0.0)
    }
}

/// Enumerate every source-to-exit path with its probability.
pub fn decompose(net: &NetworkSpec) -> Result<Vec<DecomposedPath>> {
    if net.loop_eta.is_some() {
        return Err(Error::invalid("network.loop_eta", "a loop network has no feedforward decomposition"));
    }
    let c = net.compile()?;
    let mut paths = Vec::new();
    for (si, &(entry, component)) in c.sources.iter().enumerate() {
        let mut stack = vec![(vec![entry], 1.0)];
        while let Some((route, prob)) = stack.pop() {
            let last = *route.last().unwrap();
            let exit = c.exit_probability(last);
            if exit > PROB_SLACK {
                paths.push(DecomposedPath {
                    source: si,
                    tandem: TandemSpec::new(route.iter().map(|&i| c.services[i]).collect(), component),
                    nodes: route.clone(),
                    probability: prob * exit,
                });
            }
            for &(next, p) in c.out[last].iter().rev() {
                if p > 0.0 {
                    let mut r = route.clone();
                    r.push(next);
                    stack.push((r, prob * p));
                }
            }
        }
    }
    Ok(paths)
}

// ---------------------------------------------------------------------------
// Simulation

/// One stay of one job at one node.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct JobVisit {
    pub node: usize,
    pub enter: f64,
    pub leave: f64,
}

/// Everything generated by one replication.
#[derive(Clone, Debug)]
pub struct Replication {
    pub path: ShotNoisePath,
    /// Visits in generation order (job by job, stage by stage).
    pub visits: Vec<JobVisit>,
    /// Admission epochs per source.
    pub admissions: Vec<Vec<f64>>,
    pub node_count: usize,
    pub horizon: f64,
}

impl Replication {
    /// Jobs present at each node at time `t` (right-continuous).
    pub fn counts_at(&self, t: f64) -> Vec<u32> {
        let mut c = vec![0u32; self.node_count];
        for v in &self.visits {
            if v.enter <= t && t < v.leave {
                c[v.node] += 1;
            }
        }
        c
    }

    /// Counts at each time of an increasing grid, one row per grid point.
    pub fn counts_on_grid(&self, grid: &[f64]) -> Vec<Vec<u32>> {
        let mut rows = vec![vec![0u32; self.node_count]; grid.len()];
        for v in &self.visits {
            let lo = grid.partition_point(|&g| g < v.enter);
            let hi = grid.partition_point(|&g| g < v.leave);
            for row in &mut rows[lo..hi] {
                row[v.node] += 1;
            }
        }
        rows
    }

    pub fn record(&self, node_ids: Vec<String>) -> OccupancyRecord {
        let mut events: Vec<(f64, usize, usize, i32)> = Vec::with_capacity(2 * self.visits.len());
        for (k, v) in self.visits.iter().enumerate() {
            events.push((v.enter, 2 * k, v.node, 1));
            if v.leave <= self.horizon {
                events.push((v.leave, 2 * k + 1, v.node, -1));
            }
        }
        events.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let mut level = vec![0u32; self.node_count];
        let mut steps = vec![Vec::new(); self.node_count];
        for (t, _, node, delta) in events {
            level[node] = level[node].checked_add_signed(delta).expect("job count never negative");
            steps[node].push((t, level[node]));
        }
        OccupancyRecord {
            node_ids,
            steps,
            final_counts: self.counts_at(self.horizon),
            final_intensity: (0..self.path.dim())
                .map(|i| self.path.level_component(self.horizon, i))
                .collect(),
            admissions: self.admissions.clone(),
            horizon: self.horizon,
        }
    }
}

/// Per-node job-count step functions of one replication.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OccupancyRecord {
    pub node_ids: Vec<String>,
    /// Per node, `(event time, count after the event)` in event order.
    pub steps: Vec<Vec<(f64, u32)>>,
    pub final_counts: Vec<u32>,
    pub final_intensity: Vec<f64>,
    pub admissions: Vec<Vec<f64>>,
    pub horizon: f64,
}

#[derive(Serialize)]
struct OccupancySummary<'a> {
    horizon: f64,
    node_ids: &'a [String],
    final_counts: &'a [u32],
    final_intensity: &'a [f64],
    admission_totals: Vec<usize>,
}

impl OccupancyRecord {
    /// Rows `time,node,count` ordered by time, ties by node order.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        let mut rows: Vec<(f64, usize, usize, u32)> = Vec::new();
        for (node, s) in self.steps.iter().enumerate() {
            for (k, &(t, c)) in s.iter().enumerate() {
                rows.push((t, node, k, c));
            }
        }
        rows.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        writeln!(w, "time,node,count")?;
        for (t, node, _, c) in rows {
            writeln!(w, "{t},{},{c}", self.node_ids[node])?;
        }
        Ok(())
    }

    pub fn summary_json(&self) -> String {
        serde_json::to_string_pretty(&OccupancySummary {
            horizon: self.horizon,
            node_ids: &self.node_ids,
            final_counts: &self.final_counts,
            final_intensity: &self.final_intensity,
            admission_totals: self.admissions.iter().map(Vec::len).collect(),
        })
        .expect("summary serializes")
    }
}

fn route_job(c: &Compiled, entry: usize, arrival: f64, horizon: f64, svc: &mut RngStream, routing: &mut RngStream, out: &mut Vec<JobVisit>) {
    let mut node = entry;
    let mut t = arrival;
    loop {
        let leave = t + c.services[node].sample(svc);
        out.push(JobVisit { node, enter: t, leave });
        if leave > horizon {
            return;
        }
        let edges = &c.out[node];
        if edges.is_empty() {
            return;
        }
        let u = routing.open01();
        let mut acc = 0.0;
        let mut next = None;
        for &(to, p) in edges {
            acc += p;
            if u < acc {
                next = Some(to);
                break;
            }
        }
        match next {
            Some(to) => {
                node = to;
                t = leave;
            }
            None => return,
        }
    }
}

fn run(c: &Compiled, spec: &ShotNoiseSpec, horizon: f64, streams: &mut ReplicationStreams) -> Result<Replication> {
    let path = if horizon > 0.0 {
        simulate_path(spec, horizon, &mut streams.shots)?
    } else {
        ShotNoisePath::from_shots(spec.clone().normalized()?, 0.0, vec![], vec![])?
    };
    let mut admissions = Vec::with_capacity(c.sources.len());
    match c.dependence {
        Dependence::M2 => {
            let epochs = sample_thinning(&path, c.sources[0].1, &mut streams.arrivals)?.epochs;
            admissions.resize(c.sources.len(), epochs);
        }
        _ => {
            for &(_, comp) in &c.sources {
                admissions.push(sample_thinning(&path, comp, &mut streams.arrivals)?.epochs);
            }
        }
    }
    let mut visits = Vec::new();
    // jobs in order of admission; with several sources sharing an epoch, in source order
    let mut order: Vec<(f64, usize)> = admissions
        .iter()
        .enumerate()
        .flat_map(|(si, a)| a.iter().map(move |&e| (e, si)))
        .collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    for (epoch, si) in order {
        route_job(c, c.sources[si].0, epoch, horizon, &mut streams.services, &mut streams.routing, &mut visits);
    }
    Ok(Replication {
        path,
        visits,
        admissions,
        node_count: c.services.len(),
        horizon,
    })
}

fn check_dims(net: &NetworkSpec, spec: &ShotNoiseSpec) -> Result<Compiled> {
    spec.validate()?;
    net.validate(Some(spec.dim()))?;
    net.compile()
}

/// Simulate one replication with explicit streams.
pub fn simulate_replication(
    net: &NetworkSpec,
    spec: &ShotNoiseSpec,
    horizon: f64,
    streams: &mut ReplicationStreams,
) -> Result<Replication> {
    if !(horizon >= 0.0 && horizon.is_finite()) {
        return Err(Error::invalid("horizon", format!("must be a nonnegative real, got {horizon}")));
    }
    let c = check_dims(net, spec)?;
    run(&c, spec, horizon, streams)
}

pub fn simulate(net: &NetworkSpec, spec: &ShotNoiseSpec, horizon: f64, streams: &mut ReplicationStreams) -> Result<OccupancyRecord> {
    let rep = simulate_replication(net, spec, horizon, streams)?;
    Ok(rep.record(net.nodes.iter().map(|n| n.id.clone()).collect()))
}

pub fn simulate_loop(
    eta: f64,
    service1: ServiceLaw,
    service2: ServiceLaw,
    spec: &ShotNoiseSpec,
    horizon: f64,
    streams: &mut ReplicationStreams,
) -> Result<OccupancyRecord> {
    simulate(&NetworkSpec::two_node_loop(eta, service1, service2), spec, horizon, streams)
}

/// Run `reps` replications in parallel (replication `k` uses the streams of
/// `(seed, k)`) and map each through `f`; results come back in replication order.
pub fn replicate<T, F>(net: &NetworkSpec, spec: &ShotNoiseSpec, horizon: f64, seed: u64, reps: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&Replication) -> T + Sync,
{
    if !(horizon >= 0.0 && horizon.is_finite()) {
        return Err(Error::invalid("horizon", format!("must be a nonnegative real, got {horizon}")));
    }
    let c = check_dims(net, spec)?;
    let spec = spec.clone().normalized()?;
    (0..reps as u64)
        .into_par_iter()
        .map(|k| {
            let mut streams = ReplicationStreams::new(seed, k);
            run(&c, &spec, horizon, &mut streams).map(|r| f(&r))
        })
        .collect()
}

/// Query for joint transforms: `z` per node (network node order), `s` per intensity component.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransformQuery {
    pub t: f64,
    pub z: Vec<f64>,
    #[serde(default)]
    pub s: Vec<f64>,
}

impl TransformQuery {
    pub fn new(t: f64, z: Vec<f64>, s: Vec<f64>) -> Self {
        Self { t, z, s }
    }

    pub fn validate(&self, nodes: usize, components: usize) -> Result<()> {
        if !(self.t >= 0.0 && self.t.is_finite()) {
            return Err(Error::invalid("t", format!("must be a nonnegative real, got {}", self.t)));
        }
        if self.z.len() != nodes {
            return Err(Error::DimensionMismatch { expected: nodes, got: self.z.len() });
        }
        if self.s.len() != components {
            return Err(Error::DimensionMismatch {
                expected: components,
                got: self.s.len(),
            });
        }
        if let Some(z) = self.z.iter().find(|z| !(**z > 0.0 && **z <= 1.0)) {
            return Err(Error::Domain(format!("z must lie in (0, 1], got {z}")));
        }
        if let Some(s) = self.s.iter().find(|s| !(**s >= 0.0 && s.is_finite())) {
            return Err(Error::Domain(format!("s must be nonnegative, got {s}")));
        }
        Ok(())
    }
}

/// Monte Carlo estimate of `E Π z_j^{N_j(t)} e^{-<s, Λ(t)>}`.
pub fn estimate_joint_pgf(
    net: &NetworkSpec,
    spec: &ShotNoiseSpec,
    query: &TransformQuery,
    reps: usize,
    seed: u64,
) -> Result<EstimateWithCI> {
    query.validate(net.nodes.len(), spec.dim())?;
    let values = replicate(net, spec, query.t, seed, reps, |rep| {
        let counts = rep.counts_at(query.t);
        let mut v: f64 = counts.iter().zip(&query.z).map(|(&n, &z)| z.powi(n as i32)).product();
        let e: f64 = query
            .s
            .iter()
            .enumerate()
            .map(|(i, &s)| if s == 0.0 { 0.0 } else { s * rep.path.level_component(query.t, i) })
            .sum();
        if e != 0.0 {
            v *= (-e).exp();
        }
        v
    })?;
    Ok(mean_estimate(&values, seed))
}
