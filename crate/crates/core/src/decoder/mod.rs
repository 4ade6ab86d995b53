//! Detector graphs and minimum-weight perfect-matching decoding.
//!
//! Syndrome rows are differenced in time into detection events. Every fault
//! mechanism with nonzero probability contributes an edge between the (at
//! most two) detectors it flips, weighted `-ln(p/(1-p))`; multi-qubit
//! channel masks enter through their per-qubit marginals. Defects are paired
//! by exact blossom matching over shortest-path costs, each defect also
//! holding a private edge to the cheaper lattice boundary.
//!
//! Two loss policies: *uniform* decoding replaces an erased syndrome with
//! the last observed value and decodes on the static graph; *weighted*
//! decoding additionally drops the erased measurement's time edge to zero
//! cost and offers alpha-cheapened overlay arcs for the Pauli prefixes a
//! loss may have left behind.

pub mod matching;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::layout::{CodeLayout, StabKind};
use crate::network::NetworkStructure;
use crate::sim::{ChannelSet, PauliFrame, ShotRecord};

#[derive(Debug, Error, PartialEq)]
pub enum DecodeError {
    #[error("edge probability {prob} exceeds 1/2 ({context}); outside matching validity")]
    EdgeProbabilityTooHigh { prob: f64, context: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecoderKind {
    Uniform,
    Weighted,
}

/// How weighted decoding treats the time edge of an erased measurement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErasureTimeEdge {
    /// Zero-cost: the substituted value carries no information.
    #[default]
    Free,
    /// Keep the static weight.
    Keep,
}

const NO_EDGE: u32 = u32::MAX;
/// Stand-in cost for unreachable node pairs so matching stays feasible.
const UNREACHABLE: f64 = 1e12;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DetEdge {
    pub a: u32,
    pub b: u32,
    pub prob: f64,
    pub weight: f64,
    /// Data qubits whose (graph-opposite) Pauli this edge implies.
    pub mask: Vec<u32>,
}

/// Matching graph for one detector kind over `cycles + 1` detection layers.
#[derive(Debug, Clone)]
pub struct DetectorGraph {
    pub kind: StabKind,
    pub n_stabs: usize,
    pub layers: usize,
    /// Local detector index -> global stabilizer id.
    pub stab_ids: Vec<usize>,
    /// Global stabilizer id -> local detector index.
    pub local_of: Vec<Option<usize>>,
    /// Local detector index -> schedule round of its measurement.
    pub round_of_local: Vec<usize>,
    /// Data qubit -> local detector indices of adjacent checks (1 or 2).
    pub checks_of: Vec<Vec<usize>>,
    /// Data qubit -> boundary node when the qubit has a single check.
    pub side_of: Vec<Option<u32>>,
    pub edges: Vec<DetEdge>,
    adj: Vec<Vec<u32>>,
    /// All-pairs shortest-path distances from non-boundary nodes.
    dist: Vec<Vec<f64>>,
    /// Predecessor edge ids for path reconstruction.
    pred: Vec<Vec<u32>>,
}

impl DetectorGraph {
    pub fn node(&self, local: usize, layer: usize) -> u32 {
        (layer * self.n_stabs + local) as u32
    }

    pub fn boundary_nodes(&self) -> (u32, u32) {
        let b0 = (self.n_stabs * self.layers) as u32;
        (b0, b0 + 1)
    }

    pub fn n_nodes(&self) -> usize {
        self.n_stabs * self.layers + 2
    }

    pub fn is_boundary(&self, node: u32) -> bool {
        node as usize >= self.n_stabs * self.layers
    }

    pub fn static_dist(&self, a: u32, b: u32) -> f64 {
        if a == b {
            return 0.0;
        }
        if self.is_boundary(a) {
            if self.is_boundary(b) {
                return f64::INFINITY;
            }
            return self.dist[b as usize][a as usize];
        }
        self.dist[a as usize][b as usize]
    }

    /// XOR the static shortest path's masks from `a` to `b` into `mask`.
    fn accumulate_static_path(&self, a: u32, b: u32, mask: &mut Vec<u32>) {
        if a == b {
            return;
        }
        let (src, mut cur) = if self.is_boundary(a) { (b, a) } else { (a, b) };
        debug_assert!(!self.is_boundary(src));
        while cur != src {
            let e = self.pred[src as usize][cur as usize];
            debug_assert!(e != NO_EDGE, "no path {src}->{cur}");
            let edge = &self.edges[e as usize];
            mask.extend_from_slice(&edge.mask);
            cur = if edge.a == cur { edge.b } else { edge.a };
        }
    }
}

fn edge_weight(p: f64) -> f64 {
    -(p / (1.0 - p)).ln()
}

/// Builds the static detector graph of one kind.
///
/// Space edges come from per-cycle dephasing (Z faults only, hence only in
/// the X-detector graph) and from the per-qubit mask marginals of the
/// opposite kind's twirled measurement channels; a fault lands in the layer
/// of the first measurement that reads it, so edges may be diagonal in
/// time. Time edges carry the syndrome-flip marginals.
pub fn build_detector_graph(
    layout: &CodeLayout,
    structure: &NetworkStructure,
    channels: &ChannelSet,
    p_z: f64,
    cycles: usize,
    kind: StabKind,
) -> Result<DetectorGraph, DecodeError> {
    let stab_ids = layout.stabilizer_ids(kind);
    let n_stabs = stab_ids.len();
    let layers = cycles + 1;
    let mut local_of = vec![None; layout.stabilizer_count()];
    for (local, &sid) in stab_ids.iter().enumerate() {
        local_of[sid] = Some(local);
    }
    let round_of_local: Vec<usize> = stab_ids.iter().map(|&sid| structure.round_of[sid]).collect();

    let n_qubits = layout.data_count();
    let mut checks_of = Vec::with_capacity(n_qubits);
    let mut side_of = vec![None; n_qubits];
    let side_limit = 2 * layout.d - 2;
    let b0 = (n_stabs * layers) as u32;
    for q in 0..n_qubits {
        let locals: Vec<usize> =
            layout.checks_on(q, kind).into_iter().map(|sid| local_of[sid].unwrap()).collect();
        if locals.len() == 1 {
            let (r, c) = layout.coords[q];
            let side = match kind {
                StabKind::X => {
                    debug_assert!(c == 0 || c == side_limit);
                    u32::from(c == side_limit)
                }
                StabKind::Z => {
                    debug_assert!(r == 0 || r == side_limit);
                    u32::from(r == side_limit)
                }
            };
            side_of[q] = Some(b0 + side);
        }
        checks_of.push(locals);
    }

    let node = |local: usize, layer: usize| (layer * n_stabs + local) as u32;

    // Accumulate mechanisms keyed by (endpoints, implied mask); probabilities
    // on the same key XOR-combine. BTreeMap keeps edge order deterministic.
    let mut acc: BTreeMap<(u32, u32, Vec<u32>), f64> = BTreeMap::new();
    let mut add = |a: u32, b: u32, mask: Vec<u32>, p: f64| {
        if p <= 0.0 || a == b {
            return;
        }
        let key = if a <= b { (a, b, mask) } else { (b, a, mask) };
        let q = acc.entry(key).or_insert(0.0);
        *q = *q * (1.0 - p) + p * (1.0 - *q);
    };

    // Endpoint nodes of a single-qubit fault placed at `cycle`, either at
    // cycle start (dephasing, `source_round` None) or right after the
    // sourcing measurement's round.
    let fault_nodes = |q: usize, cycle: usize, source_round: Option<usize>| -> Vec<u32> {
        let mut nodes: Vec<u32> = checks_of[q]
            .iter()
            .map(|&local| {
                let offset = match source_round {
                    Some(rm) => usize::from(round_of_local[local] <= rm),
                    None => 0,
                };
                node(local, cycle + offset)
            })
            .collect();
        if let Some(side) = side_of[q] {
            nodes.push(side);
        }
        nodes
    };

    // Dephasing: Z faults at cycle start, seen only by X detectors.
    if kind == StabKind::X && p_z > 0.0 {
        for cycle in 0..cycles {
            for q in 0..n_qubits {
                let nodes = fault_nodes(q, cycle, None);
                debug_assert_eq!(nodes.len(), 2);
                add(nodes[0], nodes[1], vec![q as u32], p_z);
            }
        }
    }

    // Backaction mask marginals of the opposite kind's measurements.
    for (sid, stab) in layout.stabilizers.iter().enumerate() {
        if stab.kind == kind {
            continue;
        }
        let channel = channels.for_weight(stab.weight());
        let source_round = structure.round_of[sid];
        for (pos, &q) in stab.support.iter().enumerate() {
            let marginal = channel.mask_marginal(pos);
            if marginal <= 0.0 {
                continue;
            }
            for cycle in 0..cycles {
                let nodes = fault_nodes(q, cycle, Some(source_round));
                debug_assert_eq!(nodes.len(), 2);
                add(nodes[0], nodes[1], vec![q as u32], marginal);
            }
        }
    }

    // Syndrome-flip marginals: time edges.
    for (local, &sid) in stab_ids.iter().enumerate() {
        let flip = channels.for_weight(layout.stabilizers[sid].weight()).flip_marginal();
        if flip <= 0.0 {
            continue;
        }
        for cycle in 0..cycles {
            add(node(local, cycle), node(local, cycle + 1), Vec::new(), flip);
        }
    }

    let mut edges = Vec::with_capacity(acc.len());
    let mut adj = vec![Vec::new(); n_stabs * layers + 2];
    for ((a, b, mask), p) in acc {
        if p > 0.5 {
            return Err(DecodeError::EdgeProbabilityTooHigh {
                prob: p,
                context: format!("{kind:?} graph, nodes {a}-{b}"),
            });
        }
        let id = edges.len() as u32;
        adj[a as usize].push(id);
        adj[b as usize].push(id);
        edges.push(DetEdge { a, b, prob: p, weight: edge_weight(p), mask });
    }

    let mut graph = DetectorGraph {
        kind,
        n_stabs,
        layers,
        stab_ids,
        local_of,
        round_of_local,
        checks_of,
        side_of,
        edges,
        adj,
        dist: Vec::new(),
        pred: Vec::new(),
    };
    graph.run_apsp();
    Ok(graph)
}

#[derive(Copy, Clone, PartialEq)]
struct HeapItem {
    dist: f64,
    node: u32,
}
impl Eq for HeapItem {}
impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        // Reversed: BinaryHeap is a max-heap, we want the closest node.
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.node.cmp(&self.node))
    }
}
impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl DetectorGraph {
    fn run_apsp(&mut self) {
        let interior = self.n_stabs * self.layers;
        let n = self.n_nodes();
        self.dist = Vec::with_capacity(interior);
        self.pred = Vec::with_capacity(interior);
        for src in 0..interior {
            let (dist, pred) = self.dijkstra(src as u32, n);
            self.dist.push(dist);
            self.pred.push(pred);
        }
    }

    /// Single-source shortest paths; boundary nodes absorb (never relaxed
    /// out of), so interior paths cannot tunnel through the boundary.
    fn dijkstra(&self, src: u32, n: usize) -> (Vec<f64>, Vec<u32>) {
        let mut dist = vec![f64::INFINITY; n];
        let mut pred = vec![NO_EDGE; n];
        let mut heap = std::collections::BinaryHeap::new();
        dist[src as usize] = 0.0;
        heap.push(HeapItem { dist: 0.0, node: src });
        while let Some(HeapItem { dist: d, node }) = heap.pop() {
            if d > dist[node as usize] {
                continue;
            }
            if self.is_boundary(node) {
                continue;
            }
            for &e in &self.adj[node as usize] {
                let edge = &self.edges[e as usize];
                let next = if edge.a == node { edge.b } else { edge.a };
                let nd = d + edge.weight;
                if nd < dist[next as usize] {
                    dist[next as usize] = nd;
                    pred[next as usize] = e;
                    heap.push(HeapItem { dist: nd, node: next });
                }
            }
        }
        (dist, pred)
    }
}

/// Decoded recovery operator: `frame.z` from the X-detector graph, `frame.x`
/// from the Z-detector graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Correction {
    pub frame: PauliFrame,
}

/// Generic minimum-cost pairing instance: `n` defects with pairwise costs
/// and a per-defect boundary cost.
pub struct PairingProblem {
    pub pair_cost: Vec<Vec<f64>>,
    pub boundary_cost: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Pairing {
    /// Defect index pairs matched to each other.
    pub pairs: Vec<(usize, usize)>,
    /// Defects matched to the boundary.
    pub to_boundary: Vec<usize>,
    pub total: f64,
}

/// Exact minimum-cost pairing with optional boundary absorption: defects
/// `i` and `n+i` (a private virtual twin) are wired so that unmatched-to-
/// boundary and pairwise matches compete in one perfect matching.
pub fn solve_pairing(problem: &PairingProblem) -> Pairing {
    let n = problem.boundary_cost.len();
    if n == 0 {
        return Pairing { pairs: Vec::new(), to_boundary: Vec::new(), total: 0.0 };
    }
    let mut edges: Vec<(usize, usize, f64)> = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in (i + 1)..n {
            let c = problem.pair_cost[i][j];
            if c.is_finite() {
                edges.push((i, j, -c));
            }
            edges.push((n + i, n + j, 0.0));
        }
        let b = problem.boundary_cost[i];
        edges.push((i, n + i, -if b.is_finite() { b } else { UNREACHABLE }));
    }
    let mate = matching::max_weight_matching(2 * n, &edges, true);

    let mut pairs = Vec::new();
    let mut to_boundary = Vec::new();
    let mut total = 0.0;
    for i in 0..n {
        match mate[i] {
            Some(j) if j == n + i => {
                to_boundary.push(i);
                total += problem.boundary_cost[i];
            }
            Some(j) if j < n => {
                if i < j {
                    pairs.push((i, j));
                    total += problem.pair_cost[i][j];
                }
            }
            _ => unreachable!("defect {i} left unmatched"),
        }
    }
    Pairing { pairs, to_boundary, total }
}

/// Erasure markers replaced by the value observed in the preceding cycles
/// (first cycle falls back to 0), chained through consecutive losses.
pub fn substitute_losses(syndromes: &[Vec<u8>]) -> Vec<Vec<u8>> {
    let mut out: Vec<Vec<u8>> = Vec::with_capacity(syndromes.len());
    for (c, row) in syndromes.iter().enumerate() {
        let mut sub = row.clone();
        for (s, v) in sub.iter_mut().enumerate() {
            if *v == 2 {
                *v = if c == 0 { 0 } else { out[c - 1][s] };
            }
        }
        out.push(sub);
    }
    out
}

/// Detection events of one graph: value changes between consecutive layers,
/// with an implicit all-zero layer before the first cycle and the noiseless
/// final row as the last layer.
pub fn detection_events(
    graph: &DetectorGraph,
    substituted: &[Vec<u8>],
    final_row: &[u8],
) -> Vec<u32> {
    let cycles = substituted.len();
    let mut defects = Vec::new();
    for (local, &sid) in graph.stab_ids.iter().enumerate() {
        let mut prev = 0u8;
        for layer in 0..=cycles {
            let v = if layer < cycles { substituted[layer][sid] } else { final_row[sid] };
            debug_assert!(v != 2, "losses must be substituted before differencing");
            if v != prev {
                defects.push(graph.node(local, layer));
            }
            prev = v;
        }
    }
    defects
}

/// Overlay arc injected by weighted decoding for one shot.
#[derive(Debug, Clone, PartialEq)]
pub struct OverlayArc {
    pub a: u32,
    pub b: u32,
    pub weight: f64,
    pub mask: Vec<u32>,
}

/// Decoder state shared across shots.
pub struct DecoderContext {
    pub x_graph: DetectorGraph,
    pub z_graph: DetectorGraph,
    /// Global stabilizer id -> schedule round.
    pub round_of: Vec<usize>,
    pub erasure_time_edge: ErasureTimeEdge,
    /// Loss fraction above which weighted decoding runs full per-shot
    /// Dijkstra instead of the overlay shortcut relaxation.
    pub dijkstra_fallback_density: f64,
}

impl DecoderContext {
    pub fn new(
        layout: &CodeLayout,
        structure: &NetworkStructure,
        channels: &ChannelSet,
        p_z: f64,
        cycles: usize,
    ) -> Result<Self, DecodeError> {
        Ok(Self {
            x_graph: build_detector_graph(layout, structure, channels, p_z, cycles, StabKind::X)?,
            z_graph: build_detector_graph(layout, structure, channels, p_z, cycles, StabKind::Z)?,
            round_of: structure.round_of.clone(),
            erasure_time_edge: ErasureTimeEdge::default(),
            dijkstra_fallback_density: 0.05,
        })
    }

    pub fn graph(&self, kind: StabKind) -> &DetectorGraph {
        match kind {
            StabKind::X => &self.x_graph,
            StabKind::Z => &self.z_graph,
        }
    }
}

/// Loss-agnostic decoding: substitute erasures, difference, match on the
/// static graph.
pub fn uniform_decode(
    record: &ShotRecord,
    ctx: &DecoderContext,
    layout: &CodeLayout,
) -> Correction {
    let substituted = substitute_losses(&record.syndromes);
    let mut correction = Correction { frame: PauliFrame::new(layout.data_count()) };
    for kind in [StabKind::X, StabKind::Z] {
        let graph = ctx.graph(kind);
        let defects = detection_events(graph, &substituted, &record.final_syndrome);
        let mask = decode_graph(graph, &defects, &[]);
        apply_graph_mask(&mut correction, kind, &mask);
    }
    correction
}

/// Loss-adaptive decoding: on top of the uniform pipeline, each erased
/// measurement zeroes its own time edge and adds alpha-cheapened arcs for
/// the Pauli prefixes its loss may have applied.
pub fn weighted_decode(
    record: &ShotRecord,
    ctx: &DecoderContext,
    layout: &CodeLayout,
    alpha: f64,
) -> Correction {
    assert!(alpha > 1.0, "alpha must exceed 1");
    let substituted = substitute_losses(&record.syndromes);
    let cycles = record.syndromes.len();

    // Collect losses from the record itself: the decoder sees which
    // detectors failed to click but never where the photon went missing.
    let mut losses: Vec<(usize, usize)> = Vec::new();
    for (cycle, row) in record.syndromes.iter().enumerate() {
        for (sid, &v) in row.iter().enumerate() {
            if v == 2 {
                losses.push((sid, cycle));
            }
        }
    }
    let density = losses.len() as f64 / (layout.stabilizer_count() * cycles) as f64;

    let mut arcs_x: Vec<OverlayArc> = Vec::new();
    let mut arcs_z: Vec<OverlayArc> = Vec::new();
    for &(sid, cycle) in &losses {
        let stab = &layout.stabilizers[sid];
        let own = ctx.graph(stab.kind);
        if ctx.erasure_time_edge == ErasureTimeEdge::Free {
            let local = own.local_of[sid].unwrap();
            let arc = OverlayArc {
                a: own.node(local, cycle),
                b: own.node(local, cycle + 1),
                weight: 0.0,
                mask: Vec::new(),
            };
            match stab.kind {
                StabKind::X => arcs_x.push(arc),
                StabKind::Z => arcs_z.push(arc),
            }
        }

        let other = ctx.graph(stab.kind.other());
        let source_round = ctx.round_of[sid];
        for prefix_len in 1..stab.weight() {
            let mask: Vec<u32> = stab.support[..prefix_len].iter().map(|&q| q as u32).collect();
            let mut nodes: Vec<u32> = Vec::new();
            let mut boundary_parity = false;
            for &q in &stab.support[..prefix_len] {
                for &local in &other.checks_of[q] {
                    let offset = usize::from(other.round_of_local[local] <= source_round);
                    let node = other.node(local, cycle + offset);
                    if let Some(pos) = nodes.iter().position(|&x| x == node) {
                        nodes.swap_remove(pos);
                    } else {
                        nodes.push(node);
                    }
                }
                if other.side_of[q].is_some() {
                    boundary_parity ^= true;
                }
            }
            let arc = match nodes.len() {
                0 => continue, // undetectable: stabilizer-equivalent prefix
                1 => {
                    let u = nodes[0];
                    debug_assert!(boundary_parity);
                    let (b0, b1) = other.boundary_nodes();
                    let (d0, d1) = (other.static_dist(u, b0), other.static_dist(u, b1));
                    let b = if d0 <= d1 { b0 } else { b1 };
                    OverlayArc { a: u, b, weight: d0.min(d1) / alpha, mask }
                }
                2 => OverlayArc {
                    a: nodes[0],
                    b: nodes[1],
                    weight: other.static_dist(nodes[0], nodes[1]) / alpha,
                    mask,
                },
                n => unreachable!("prefix pattern flips {n} detectors"),
            };
            match stab.kind.other() {
                StabKind::X => arcs_x.push(arc),
                StabKind::Z => arcs_z.push(arc),
            }
        }
    }

    let mut correction = Correction { frame: PauliFrame::new(layout.data_count()) };
    for (kind, arcs) in [(StabKind::X, &arcs_x), (StabKind::Z, &arcs_z)] {
        let graph = ctx.graph(kind);
        let defects = detection_events(graph, &substituted, &record.final_syndrome);
        let mask = if density > ctx.dijkstra_fallback_density {
            decode_graph_dijkstra(graph, &defects, arcs)
        } else {
            decode_graph(graph, &defects, arcs)
        };
        apply_graph_mask(&mut correction, kind, &mask);
    }
    correction
}

pub fn decode(
    kind: DecoderKind,
    record: &ShotRecord,
    ctx: &DecoderContext,
    layout: &CodeLayout,
    alpha: f64,
) -> Correction {
    match kind {
        DecoderKind::Uniform => uniform_decode(record, ctx, layout),
        DecoderKind::Weighted => weighted_decode(record, ctx, layout, alpha),
    }
}

fn apply_graph_mask(correction: &mut Correction, kind: StabKind, mask: &[u32]) {
    // X detectors witness Z faults, so their matching yields Z corrections.
    let target = match kind {
        StabKind::X => &mut correction.frame.z,
        StabKind::Z => &mut correction.frame.x,
    };
    for &q in mask {
        target.toggle(q as usize);
    }
}

/// Matches defects on the static graph plus overlay arcs and returns the
/// combined path mask (toggled qubits, XOR-folded).
fn decode_graph(graph: &DetectorGraph, defects: &[u32], arcs: &[OverlayArc]) -> Vec<u32> {
    if defects.is_empty() {
        return Vec::new();
    }
    if arcs.is_empty() {
        return decode_static(graph, defects);
    }
    decode_overlay_relaxation(graph, defects, arcs)
}

fn fold_mask(mut raw: Vec<u32>) -> Vec<u32> {
    raw.sort_unstable();
    let mut out = Vec::with_capacity(raw.len());
    let mut i = 0;
    while i < raw.len() {
        let mut j = i;
        while j < raw.len() && raw[j] == raw[i] {
            j += 1;
        }
        if (j - i) % 2 == 1 {
            out.push(raw[i]);
        }
        i = j;
    }
    out
}

fn decode_static(graph: &DetectorGraph, defects: &[u32]) -> Vec<u32> {
    let n = defects.len();
    let (b0, b1) = graph.boundary_nodes();
    let mut pair_cost = vec![vec![f64::INFINITY; n]; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let d = graph.static_dist(defects[i], defects[j]);
            pair_cost[i][j] = d;
            pair_cost[j][i] = d;
        }
    }
    let boundary_cost: Vec<f64> = defects
        .iter()
        .map(|&u| graph.static_dist(u, b0).min(graph.static_dist(u, b1)))
        .collect();
    let pairing = solve_pairing(&PairingProblem { pair_cost, boundary_cost });

    let mut raw = Vec::new();
    for &(i, j) in &pairing.pairs {
        graph.accumulate_static_path(defects[i], defects[j], &mut raw);
    }
    for &i in &pairing.to_boundary {
        let u = defects[i];
        let b = if graph.static_dist(u, b0) <= graph.static_dist(u, b1) { b0 } else { b1 };
        graph.accumulate_static_path(u, b, &mut raw);
    }
    fold_mask(raw)
}

/// Shortcut relaxation: distances between the interesting nodes (defects,
/// overlay endpoints, boundaries) start from the static table and are
/// relaxed through the overlay arcs, which only ever lower costs. Exact,
/// and per-shot work scales with the overlay size rather than the graph.
fn decode_overlay_relaxation(
    graph: &DetectorGraph,
    defects: &[u32],
    arcs: &[OverlayArc],
) -> Vec<u32> {
    let (b0, b1) = graph.boundary_nodes();
    let mut nodes: Vec<u32> = defects.to_vec();
    nodes.extend(arcs.iter().flat_map(|a| [a.a, a.b]));
    nodes.push(b0);
    nodes.push(b1);
    nodes.sort_unstable();
    nodes.dedup();
    let idx_of = |u: u32| nodes.binary_search(&u).unwrap();
    let m = nodes.len();

    // Base arcs: static distances, overlaid by any cheaper direct arc.
    #[derive(Clone, Copy, PartialEq)]
    enum Arc {
        None,
        Static,
        Overlay(u32),
    }
    let mut dist = vec![f64::INFINITY; m * m];
    let mut base = vec![Arc::None; m * m];
    let mut via = vec![u32::MAX; m * m];
    for i in 0..m {
        dist[i * m + i] = 0.0;
        for j in (i + 1)..m {
            let d = graph.static_dist(nodes[i], nodes[j]);
            if d.is_finite() {
                dist[i * m + j] = d;
                dist[j * m + i] = d;
                base[i * m + j] = Arc::Static;
                base[j * m + i] = Arc::Static;
            }
        }
    }
    for (k, arc) in arcs.iter().enumerate() {
        let (i, j) = (idx_of(arc.a), idx_of(arc.b));
        if arc.weight < dist[i * m + j] {
            dist[i * m + j] = arc.weight;
            dist[j * m + i] = arc.weight;
            base[i * m + j] = Arc::Overlay(k as u32);
            base[j * m + i] = Arc::Overlay(k as u32);
            via[i * m + j] = u32::MAX;
            via[j * m + i] = u32::MAX;
        }
    }
    // Floyd-Warshall over the shortcut set; boundaries stay absorbing.
    for k in 0..m {
        if nodes[k] == b0 || nodes[k] == b1 {
            continue;
        }
        for i in 0..m {
            if i == k || !dist[i * m + k].is_finite() {
                continue;
            }
            for j in 0..m {
                let nd = dist[i * m + k] + dist[k * m + j];
                if nd < dist[i * m + j] {
                    dist[i * m + j] = nd;
                    via[i * m + j] = k as u32;
                    base[i * m + j] = Arc::None;
                }
            }
        }
    }

    let n = defects.len();
    let mut pair_cost = vec![vec![f64::INFINITY; n]; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let d = dist[idx_of(defects[i]) * m + idx_of(defects[j])];
            pair_cost[i][j] = d;
            pair_cost[j][i] = d;
        }
    }
    let boundary_cost: Vec<f64> = defects
        .iter()
        .map(|&u| {
            let i = idx_of(u);
            dist[i * m + idx_of(b0)].min(dist[i * m + idx_of(b1)])
        })
        .collect();
    let pairing = solve_pairing(&PairingProblem { pair_cost, boundary_cost });

    // Path reconstruction down the via-tree to base arcs.
    let mut raw = Vec::new();
    let walk = |from: usize, to: usize, raw: &mut Vec<u32>| {
        let mut stack = vec![(from, to)];
        while let Some((i, j)) = stack.pop() {
            if i == j {
                continue;
            }
            let k = via[i * m + j];
            if k != u32::MAX {
                stack.push((i, k as usize));
                stack.push((k as usize, j));
                continue;
            }
            match base[i * m + j] {
                Arc::Static => graph.accumulate_static_path(nodes[i], nodes[j], &mut *raw),
                Arc::Overlay(a) => raw.extend_from_slice(&arcs[a as usize].mask),
                Arc::None => debug_assert!(false, "unrealized supergraph arc {i}-{j}"),
            }
        }
    };
    for &(i, j) in &pairing.pairs {
        walk(idx_of(defects[i]), idx_of(defects[j]), &mut raw);
    }
    for &i in &pairing.to_boundary {
        let u = idx_of(defects[i]);
        let (d0, d1) = (dist[u * m + idx_of(b0)], dist[u * m + idx_of(b1)]);
        let b = if d0 <= d1 { idx_of(b0) } else { idx_of(b1) };
        walk(u, b, &mut raw);
    }
    fold_mask(raw)
}

/// Exact fallback for loss-dense shots: fresh Dijkstra per defect over the
/// static graph with overlay arcs spliced in.
fn decode_graph_dijkstra(graph: &DetectorGraph, defects: &[u32], arcs: &[OverlayArc]) -> Vec<u32> {
    if defects.is_empty() {
        return Vec::new();
    }
    let n_nodes = graph.n_nodes();
    let mut extra_adj: Vec<Vec<u32>> = vec![Vec::new(); n_nodes];
    for (k, arc) in arcs.iter().enumerate() {
        extra_adj[arc.a as usize].push(k as u32);
        extra_adj[arc.b as usize].push(k as u32);
    }
    let (b0, b1) = graph.boundary_nodes();

    // pred encoding: static edge id, or overlay arc id with the high bit set.
    const OVERLAY_BIT: u32 = 1 << 31;
    let run = |src: u32| -> (Vec<f64>, Vec<u32>) {
        let mut dist = vec![f64::INFINITY; n_nodes];
        let mut pred = vec![NO_EDGE; n_nodes];
        let mut heap = std::collections::BinaryHeap::new();
        dist[src as usize] = 0.0;
        heap.push(HeapItem { dist: 0.0, node: src });
        while let Some(HeapItem { dist: d, node }) = heap.pop() {
            if d > dist[node as usize] {
                continue;
            }
            if graph.is_boundary(node) {
                continue;
            }
            for &e in &graph.adj[node as usize] {
                let edge = &graph.edges[e as usize];
                let next = if edge.a == node { edge.b } else { edge.a };
                let nd = d + edge.weight;
                if nd < dist[next as usize] {
                    dist[next as usize] = nd;
                    pred[next as usize] = e;
                    heap.push(HeapItem { dist: nd, node: next });
                }
            }
            for &k in &extra_adj[node as usize] {
                let arc = &arcs[k as usize];
                let next = if arc.a == node { arc.b } else { arc.a };
                let nd = d + arc.weight;
                if nd < dist[next as usize] {
                    dist[next as usize] = nd;
                    pred[next as usize] = k | OVERLAY_BIT;
                    heap.push(HeapItem { dist: nd, node: next });
                }
            }
        }
        (dist, pred)
    };

    let n = defects.len();
    let per_defect: Vec<(Vec<f64>, Vec<u32>)> = defects.iter().map(|&u| run(u)).collect();
    let mut pair_cost = vec![vec![f64::INFINITY; n]; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let d = per_defect[i].0[defects[j] as usize];
            pair_cost[i][j] = d;
            pair_cost[j][i] = d;
        }
    }
    let boundary_cost: Vec<f64> = per_defect
        .iter()
        .map(|(dist, _)| dist[b0 as usize].min(dist[b1 as usize]))
        .collect();
    let pairing = solve_pairing(&PairingProblem { pair_cost, boundary_cost });

    let mut raw = Vec::new();
    let walk = |i: usize, target: u32, raw: &mut Vec<u32>| {
        let (_, pred) = &per_defect[i];
        let mut cur = target;
        while cur != defects[i] {
            let p = pred[cur as usize];
            debug_assert!(p != NO_EDGE);
            if p & OVERLAY_BIT != 0 {
                let arc = &arcs[(p & !OVERLAY_BIT) as usize];
                raw.extend_from_slice(&arc.mask);
                cur = if arc.a == cur { arc.b } else { arc.a };
            } else {
                let edge = &graph.edges[p as usize];
                raw.extend_from_slice(&edge.mask);
                cur = if edge.a == cur { edge.b } else { edge.a };
            }
        }
    };
    for &(i, j) in &pairing.pairs {
        walk(i, defects[j], &mut raw);
    }
    for &i in &pairing.to_boundary {
        let (dist, _) = &per_defect[i];
        let b = if dist[b0 as usize] <= dist[b1 as usize] { b0 } else { b1 };
        walk(i, b, &mut raw);
    }
    fold_mask(raw)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cavity::{DelayProfile, PulseParams};
    use crate::layout::build_layout;
    use crate::network::{assign_cavities, StructureKind};
    use crate::noise::{LossEvent, NoiseBudget};
    use crate::sim::{
        logical_flips, shot_rng, simulate_injected, simulate_shot, ChannelSet, FaultInjection,
        ForcedLoss, SimContext,
    };

    fn budget_with(p_cav: f64, p_dep: f64, w1: f64) -> NoiseBudget {
        NoiseBudget {
            p_cav,
            p_del: (1.0 - w1) / 2.0,
            p_sw: 0.0,
            p_cir: 0.0,
            p_dep,
            profile: DelayProfile {
                tau0: 0.0,
                tau1: 0.0,
                w: (0..=4).map(|m| w1.powi((m * m) as i32)).collect(),
            },
        }
    }

    fn pulse() -> PulseParams {
        PulseParams::new(1.0, 6.0).unwrap()
    }

    struct Fixture {
        layout: crate::layout::CodeLayout,
        structure: crate::network::NetworkStructure,
        budget: NoiseBudget,
        cycles: usize,
    }

    impl Fixture {
        fn new(d: usize, budget: NoiseBudget) -> Self {
            let layout = build_layout(d).unwrap();
            let structure = assign_cavities(&layout, StructureKind::NCavity).unwrap();
            Self { layout, structure, budget, cycles: d }
        }

        fn sim(&self) -> SimContext<'_> {
            SimContext::new(&self.layout, &self.structure, &self.budget, &pulse(), self.cycles)
                .unwrap()
        }

        fn decoder(&self) -> DecoderContext {
            let sim = self.sim();
            DecoderContext::new(&self.layout, &self.structure, &sim.channels, sim.p_z, self.cycles)
                .unwrap()
        }
    }

    #[test]
    fn edge_weights_follow_the_log_likelihood_rule() {
        let fx = Fixture::new(3, budget_with(0.01, 1e-4, 0.99));
        let ctx = fx.decoder();
        for graph in [&ctx.x_graph, &ctx.z_graph] {
            assert!(!graph.edges.is_empty());
            for e in &graph.edges {
                assert!(e.prob > 0.0 && e.prob <= 0.5);
                let want = -(e.prob / (1.0 - e.prob)).ln();
                assert!((e.weight - want).abs() < 1e-12);
                assert!(e.weight >= 0.0);
            }
        }
    }

    #[test]
    fn dephasing_only_graph_has_no_time_edges() {
        let fx = Fixture::new(3, budget_with(0.0, 1e-4, 1.0));
        let ctx = fx.decoder();
        // Space edges in the X graph: one per qubit per cycle.
        let n_q = fx.layout.data_count();
        assert_eq!(ctx.x_graph.edges.len(), n_q * fx.cycles);
        for e in &ctx.x_graph.edges {
            assert_eq!(e.mask.len(), 1, "dephasing edges carry single-qubit masks");
            // Same layer or boundary: never a time edge.
            if !ctx.x_graph.is_boundary(e.b) {
                assert_eq!(
                    e.a as usize / ctx.x_graph.n_stabs,
                    e.b as usize / ctx.x_graph.n_stabs
                );
            }
        }
        // Z faults are invisible to Z checks.
        assert!(ctx.z_graph.edges.is_empty());
    }

    #[test]
    fn node_and_edge_counts_match_independent_enumeration_at_d3() {
        let fx = Fixture::new(3, budget_with(0.01, 1e-4, 0.99));
        let ctx = fx.decoder();
        let d = 3;
        let n_stabs = d * (d - 1);
        let layers = fx.cycles + 1;
        assert_eq!(ctx.x_graph.n_stabs, n_stabs);
        assert_eq!(ctx.x_graph.n_nodes(), n_stabs * layers + 2);
        assert_eq!(ctx.z_graph.n_nodes(), n_stabs * layers + 2);

        // Independent enumeration of expected edge keys, walking the layout
        // directly: dephasing per (qubit, cycle), one marginal per (source
        // measurement, support qubit, cycle), one time edge per
        // (detector, cycle).
        for kind in [StabKind::X, StabKind::Z] {
            let graph = ctx.graph(kind);
            let mut keys: std::collections::BTreeSet<(u32, u32, Vec<u32>)> =
                std::collections::BTreeSet::new();
            let node_of = |sid: usize, layer: usize| {
                graph.node(graph.local_of[sid].unwrap(), layer)
            };
            let endpoints = |q: usize, cycle: usize, src_round: Option<usize>| {
                let checks = fx.layout.checks_on(q, kind);
                let mut nodes: Vec<u32> = checks
                    .iter()
                    .map(|&s| {
                        let off = src_round
                            .map_or(0, |rm| usize::from(fx.structure.round_of[s] <= rm));
                        node_of(s, cycle + off)
                    })
                    .collect();
                if checks.len() == 1 {
                    let (r, c) = fx.layout.coords[q];
                    let side = match kind {
                        StabKind::X => u32::from(c == 2 * d - 2),
                        StabKind::Z => u32::from(r == 2 * d - 2),
                    };
                    nodes.push(graph.boundary_nodes().0 + side);
                }
                let (a, b) = (nodes[0], nodes[1]);
                if a <= b { (a, b) } else { (b, a) }
            };
            for cycle in 0..fx.cycles {
                if kind == StabKind::X {
                    for q in 0..fx.layout.data_count() {
                        let (a, b) = endpoints(q, cycle, None);
                        keys.insert((a, b, vec![q as u32]));
                    }
                }
                for (sid, stab) in fx.layout.stabilizers.iter().enumerate() {
                    if stab.kind == kind {
                        let local = graph.local_of[sid].unwrap();
                        keys.insert((
                            graph.node(local, cycle),
                            graph.node(local, cycle + 1),
                            vec![],
                        ));
                    } else {
                        for &q in &stab.support {
                            let (a, b) =
                                endpoints(q, cycle, Some(fx.structure.round_of[sid]));
                            keys.insert((a, b, vec![q as u32]));
                        }
                    }
                }
            }
            let got: std::collections::BTreeSet<(u32, u32, Vec<u32>)> = graph
                .edges
                .iter()
                .map(|e| (e.a, e.b, e.mask.clone()))
                .collect();
            assert_eq!(got, keys, "{kind:?} subgraph edge keys");
            assert_eq!(graph.edges.len(), got.len(), "no duplicate keys");
        }
    }

    #[test]
    fn empty_defect_set_matches_trivially() {
        let pairing = solve_pairing(&PairingProblem {
            pair_cost: vec![],
            boundary_cost: vec![],
        });
        assert!(pairing.pairs.is_empty() && pairing.to_boundary.is_empty());
        assert_eq!(pairing.total, 0.0);
    }

    #[test]
    fn two_defects_pair_exactly_when_cheaper_than_both_boundaries() {
        let near = solve_pairing(&PairingProblem {
            pair_cost: vec![vec![0.0, 1.0], vec![1.0, 0.0]],
            boundary_cost: vec![2.0, 2.0],
        });
        assert_eq!(near.pairs, vec![(0, 1)]);
        let far = solve_pairing(&PairingProblem {
            pair_cost: vec![vec![0.0, 5.0], vec![5.0, 0.0]],
            boundary_cost: vec![2.0, 2.0],
        });
        assert!(far.pairs.is_empty());
        assert_eq!(far.to_boundary, vec![0, 1]);
    }

    #[test]
    fn noiseless_record_decodes_to_identity_under_both_policies() {
        let fx = Fixture::new(3, budget_with(0.005, 1e-4, 0.995));
        let ctx = fx.decoder();
        let sim = fx.sim();
        let record = simulate_injected(&sim, &FaultInjection::default());
        for kind in [DecoderKind::Uniform, DecoderKind::Weighted] {
            let c = decode(kind, &record, &ctx, &fx.layout, 10.0);
            assert!(c.frame.is_identity(), "{kind:?}");
        }
    }

    #[test]
    fn single_bulk_z_error_is_repaired_up_to_stabilizers() {
        let fx = Fixture::new(3, budget_with(0.005, 1e-4, 0.995));
        let ctx = fx.decoder();
        let sim = fx.sim();
        for q in 0..fx.layout.data_count() {
            let record = simulate_injected(
                &sim,
                &FaultInjection { z_errors: vec![(1, q)], ..Default::default() },
            );
            let correction = uniform_decode(&record, &ctx, &fx.layout);
            let mut residual = record.frame.clone();
            residual.xor_with(&correction.frame);
            assert_eq!(logical_flips(&residual, &fx.layout), (false, false), "qubit {q}");
            // Syndrome-consistent: the residual commutes with every check.
            for stab in &fx.layout.stabilizers {
                let parity = match stab.kind {
                    StabKind::X => residual.z.parity_over(&stab.support),
                    StabKind::Z => residual.x.parity_over(&stab.support),
                };
                assert!(!parity, "qubit {q} leaves a syndrome at {:?}", stab.coord);
            }
        }
    }

    #[test]
    fn quiet_loss_decodes_to_identity() {
        let fx = Fixture::new(3, budget_with(0.005, 1e-4, 0.995));
        let ctx = fx.decoder();
        let sim = fx.sim();
        let record = simulate_injected(
            &sim,
            &FaultInjection {
                forced_loss: Some(ForcedLoss {
                    stabilizer: 4,
                    cycle: 1,
                    event: LossEvent { stage: 0 },
                    apply_backaction: false,
                }),
                ..Default::default()
            },
        );
        assert_eq!(record.syndromes[1][4], 2);
        for kind in [DecoderKind::Uniform, DecoderKind::Weighted] {
            let c = decode(kind, &record, &ctx, &fx.layout, 10.0);
            assert!(c.frame.is_identity(), "{kind:?}");
        }
    }

    #[test]
    fn weighted_without_losses_equals_uniform() {
        let fx = Fixture::new(3, budget_with(0.0, 1e-3, 0.99));
        let ctx = fx.decoder();
        let sim = fx.sim();
        for shot in 0..200u64 {
            let mut rng = shot_rng(2024, shot);
            let record = simulate_shot(&sim, &mut rng);
            assert!(record.syndromes.iter().flatten().all(|&v| v != 2));
            let u = uniform_decode(&record, &ctx, &fx.layout);
            let w = weighted_decode(&record, &ctx, &fx.layout, 10.0);
            assert_eq!(u, w, "shot {shot}");
        }
    }

    #[test]
    fn heralded_prefix_backaction_is_restored_by_weighted_decoding() {
        let fx = Fixture::new(3, budget_with(0.005, 1e-4, 0.995));
        let ctx = fx.decoder();
        let sim = fx.sim();
        // Weight-4 Z stabilizer, stage-2 loss with its backaction applied:
        // the frame picks up Z1 Z2 and the syndrome reads 2.
        let sid = fx
            .layout
            .stabilizers
            .iter()
            .position(|s| s.kind == StabKind::Z && s.weight() == 4)
            .unwrap();
        let record = simulate_injected(
            &sim,
            &FaultInjection {
                forced_loss: Some(ForcedLoss {
                    stabilizer: sid,
                    cycle: 1,
                    event: LossEvent { stage: 2 },
                    apply_backaction: true,
                }),
                ..Default::default()
            },
        );
        let correction = weighted_decode(&record, &ctx, &fx.layout, 10.0);
        let mut residual = record.frame.clone();
        residual.xor_with(&correction.frame);
        assert_eq!(logical_flips(&residual, &fx.layout), (false, false));
        for stab in &fx.layout.stabilizers {
            let parity = match stab.kind {
                StabKind::X => residual.z.parity_over(&stab.support),
                StabKind::Z => residual.x.parity_over(&stab.support),
            };
            assert!(!parity);
        }
    }

    #[test]
    fn overlay_arcs_never_cost_more_than_the_static_route() {
        let fx = Fixture::new(3, budget_with(0.02, 1e-4, 0.99));
        let ctx = fx.decoder();
        let sim = fx.sim();
        let mut saw_loss = false;
        for shot in 0..100u64 {
            let mut rng = shot_rng(5150, shot);
            let record = simulate_shot(&sim, &mut rng);
            if record.syndromes.iter().flatten().any(|&v| v == 2) {
                saw_loss = true;
            }
            // Exercise both code paths against each other: the overlay
            // relaxation and the per-shot Dijkstra fallback must agree on
            // the final residual class.
            let fast = weighted_decode(&record, &ctx, &fx.layout, 10.0);
            let mut ctx2 = Fixture::new(3, budget_with(0.02, 1e-4, 0.99)).decoder();
            ctx2.dijkstra_fallback_density = 0.0;
            let slow = weighted_decode(&record, &ctx2, &fx.layout, 10.0);
            let mut a = record.frame.clone();
            a.xor_with(&fast.frame);
            let mut b = record.frame.clone();
            b.xor_with(&slow.frame);
            assert_eq!(
                logical_flips(&a, &fx.layout),
                logical_flips(&b, &fx.layout),
                "shot {shot}"
            );
        }
        assert!(saw_loss, "test never exercised a loss");
    }

    #[test]
    fn decoded_residual_is_always_syndrome_consistent() {
        let fx = Fixture::new(4, budget_with(0.02, 1e-3, 0.99));
        let ctx = fx.decoder();
        let sim = fx.sim();
        for shot in 0..150u64 {
            let mut rng = shot_rng(33, shot);
            let record = simulate_shot(&sim, &mut rng);
            for kind in [DecoderKind::Uniform, DecoderKind::Weighted] {
                let correction = decode(kind, &record, &ctx, &fx.layout, 10.0);
                let mut residual = record.frame.clone();
                residual.xor_with(&correction.frame);
                for stab in &fx.layout.stabilizers {
                    let parity = match stab.kind {
                        StabKind::X => residual.z.parity_over(&stab.support),
                        StabKind::Z => residual.x.parity_over(&stab.support),
                    };
                    assert!(!parity, "{kind:?} shot {shot} at {:?}", stab.coord);
                }
            }
        }
    }
}
