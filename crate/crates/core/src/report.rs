//! Result emission: CSV tables, the flat physics report, the layout dump
//! and the binary per-shot record dump.
//!
//! Numeric output uses Rust's shortest round-trip float formatting, comma
//! separators, `.` decimal points and LF line endings, so repeated runs of
//! the same configuration produce byte-identical files.

use std::io::Write;
use std::path::Path;

use serde::Serialize;
use thiserror::Error;

use crate::config::ExperimentConfig;
use crate::decoder::Correction;
use crate::harness::{AlphaRow, BoundaryRow, PreparedPoint, ResultRow};
use crate::layout::CodeLayout;
use crate::network::{cycle_time, NetworkStructure};
use crate::noise::dephasing_rule;
use crate::sim::ShotRecord;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("cannot write {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

fn write_file(path: impl AsRef<Path>, contents: &[u8]) -> Result<(), ReportError> {
    let path = path.as_ref();
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir).map_err(|source| ReportError::Io {
                path: path.display().to_string(),
                source,
            })?;
        }
    }
    std::fs::write(path, contents).map_err(|source| ReportError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub const RESULT_COLUMNS: &[&str] = &[
    "g",
    "gamma",
    "kappa_in",
    "kappa_ex",
    "pulse_length",
    "window_factor",
    "structure",
    "n_cavities",
    "depth",
    "cycle_time",
    "t2",
    "p_sw",
    "p_cir",
    "decoder",
    "alpha",
    "d",
    "cycles",
    "shots",
    "seed",
    "p_cav",
    "p_del",
    "p_dep",
    "p_z_per_cycle",
    "p_tot_estimate",
    "failures",
    "p_logical",
    "p_logical_lo",
    "p_logical_hi",
    "per_cycle",
    "per_cycle_lo",
    "per_cycle_hi",
    "ratio_vs_prev",
];

fn decoder_label(kind: crate::decoder::DecoderKind) -> &'static str {
    match kind {
        crate::decoder::DecoderKind::Uniform => "uniform",
        crate::decoder::DecoderKind::Weighted => "weighted",
    }
}

pub fn results_csv(rows: &[ResultRow]) -> String {
    let mut out = String::new();
    out.push_str(&RESULT_COLUMNS.join(","));
    out.push('\n');
    for r in rows {
        let ratio = r.ratio_vs_prev.map(|x| x.to_string()).unwrap_or_default();
        let fields: Vec<String> = vec![
            r.g.to_string(),
            r.gamma.to_string(),
            r.kappa_in.to_string(),
            r.kappa_ex.to_string(),
            r.pulse_length.to_string(),
            r.window_factor.to_string(),
            r.structure.label().to_string(),
            r.n_cavities.to_string(),
            r.depth.to_string(),
            r.cycle_time.to_string(),
            r.t2.to_string(),
            r.p_sw.to_string(),
            r.p_cir.to_string(),
            decoder_label(r.decoder).to_string(),
            r.alpha.to_string(),
            r.d.to_string(),
            r.cycles.to_string(),
            r.shots.to_string(),
            r.seed.to_string(),
            r.p_cav.to_string(),
            r.p_del.to_string(),
            r.p_dep.to_string(),
            r.p_z_per_cycle.to_string(),
            r.p_tot_estimate.to_string(),
            r.failures.to_string(),
            r.p_logical.to_string(),
            r.p_logical_lo.to_string(),
            r.p_logical_hi.to_string(),
            r.per_cycle.to_string(),
            r.per_cycle_lo.to_string(),
            r.per_cycle_hi.to_string(),
            ratio,
        ];
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

pub fn write_results_csv(path: impl AsRef<Path>, rows: &[ResultRow]) -> Result<(), ReportError> {
    write_file(path, results_csv(rows).as_bytes())
}

pub fn boundary_csv(rows: &[BoundaryRow]) -> String {
    let mut out = String::from(
        "kappa_in,d_low,d_high,decoder,p_sw,p_cir,g_star,c_in,resolved,evaluations\n",
    );
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            r.kappa_in,
            r.d_low,
            r.d_high,
            decoder_label(r.decoder),
            r.p_sw,
            r.p_cir,
            r.g_star,
            r.c_in,
            r.resolved,
            r.evaluations,
        ));
    }
    out
}

pub fn write_boundary_csv(path: impl AsRef<Path>, rows: &[BoundaryRow]) -> Result<(), ReportError> {
    write_file(path, boundary_csv(rows).as_bytes())
}

pub fn alpha_csv(rows: &[AlphaRow]) -> String {
    let mut out = String::from("alpha,d,shots,failures,per_cycle,per_cycle_lo,per_cycle_hi\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.alpha, r.d, r.shots, r.failures, r.per_cycle, r.per_cycle_lo, r.per_cycle_hi
        ));
    }
    out
}

pub fn write_alpha_csv(path: impl AsRef<Path>, rows: &[AlphaRow]) -> Result<(), ReportError> {
    write_file(path, alpha_csv(rows).as_bytes())
}

/// Flat `name = value` physics report for one resolved point, one line per
/// quantity; suitable for golden-file comparison.
pub fn physics_report(cfg: &ExperimentConfig, point: &PreparedPoint) -> String {
    let b = &point.operating.budget;
    let profile = &b.profile;
    let kappa = point.operating.kappa_ex + cfg.cavity.kappa_in;
    let c_in = if cfg.cavity.kappa_in > 0.0 {
        cfg.cavity.g * cfg.cavity.g / (2.0 * cfg.cavity.kappa_in * cfg.cavity.gamma)
    } else {
        f64::INFINITY
    };
    let ct = cycle_time(&point.structure, &point.operating.pulse);
    let p_z = if b.p_dep > 0.0 {
        dephasing_rule(1.0 / (2.0 * b.p_dep), ct).unwrap_or(0.0)
    } else {
        0.0
    };
    let mut out = String::new();
    let mut line = |name: &str, value: String| {
        out.push_str(name);
        out.push_str(" = ");
        out.push_str(&value);
        out.push('\n');
    };
    line("g", cfg.cavity.g.to_string());
    line("gamma", cfg.cavity.gamma.to_string());
    line("kappa_in", cfg.cavity.kappa_in.to_string());
    line("kappa_ex", point.operating.kappa_ex.to_string());
    line("kappa", kappa.to_string());
    line("c_in", c_in.to_string());
    line("pulse_length", point.operating.pulse.pulse_length.to_string());
    line("window_factor", point.operating.pulse.window_factor.to_string());
    line("tau0", profile.tau0.to_string());
    line("tau1", profile.tau1.to_string());
    for (m, w) in profile.w.iter().enumerate() {
        line(&format!("w{m}"), w.to_string());
    }
    line("p_cav", b.p_cav.to_string());
    line("p_del", b.p_del.to_string());
    line("p_sw", b.p_sw.to_string());
    line("p_cir", b.p_cir.to_string());
    line("p_dep", b.p_dep.to_string());
    line("d", point.layout.d.to_string());
    line("structure", point.structure.kind.label().to_string());
    line("n_cavities", point.structure.n_cavities.to_string());
    line("depth", point.structure.depth().to_string());
    line("cycle_time", ct.to_string());
    line("p_z_per_cycle", p_z.to_string());
    line("p_tot_estimate", point.operating.p_tot.to_string());
    line("on_search_boundary", point.operating.on_boundary.to_string());
    out
}

#[derive(Serialize)]
struct LayoutDump<'a> {
    d: usize,
    data_qubits: &'a [(usize, usize)],
    stabilizers: &'a [crate::layout::Stabilizer],
    logical_x: &'a [usize],
    logical_z: &'a [usize],
    structure: &'a NetworkStructure,
}

/// JSON dump of the lattice and cavity assignment for visualization and
/// golden-file tests.
pub fn layout_json(layout: &CodeLayout, structure: &NetworkStructure) -> String {
    serde_json::to_string_pretty(&LayoutDump {
        d: layout.d,
        data_qubits: &layout.coords,
        stabilizers: &layout.stabilizers,
        logical_x: &layout.logical_x,
        logical_z: &layout.logical_z,
        structure,
    })
    .expect("layout serializes")
}

const RECORD_MAGIC: &[u8; 8] = b"CVNRECD1";

/// Binary per-shot dump: magic, `u32` stabilizer count, `u32` noisy cycles,
/// `u64` shots; then per shot the `(cycles + 1) * n_stabs` syndrome values
/// packed two bits each (row-major, final noiseless row last, byte-padded)
/// followed by one flags byte (bit 0: raw logical X flip, bit 1: raw
/// logical Z flip, bit 2: failure after the stored correction).
pub fn write_record_dump(
    path: impl AsRef<Path>,
    records: &[ShotRecord],
    corrections: &[Correction],
    layout: &CodeLayout,
) -> Result<(), ReportError> {
    let path = path.as_ref();
    let n_stabs = layout.stabilizer_count();
    let cycles = records.first().map_or(0, |r| r.syndromes.len());
    let mut buf: Vec<u8> = Vec::new();
    buf.extend_from_slice(RECORD_MAGIC);
    buf.write_all(&(n_stabs as u32).to_le_bytes()).unwrap();
    buf.write_all(&(cycles as u32).to_le_bytes()).unwrap();
    buf.write_all(&(records.len() as u64).to_le_bytes()).unwrap();
    for (record, correction) in records.iter().zip(corrections) {
        let mut packed = 0u8;
        let mut filled = 0u8;
        let values = record
            .syndromes
            .iter()
            .flatten()
            .chain(record.final_syndrome.iter());
        for &v in values {
            packed |= (v & 0b11) << (2 * filled);
            filled += 1;
            if filled == 4 {
                buf.push(packed);
                packed = 0;
                filled = 0;
            }
        }
        if filled > 0 {
            buf.push(packed);
        }
        let mut residual = record.frame.clone();
        residual.xor_with(&correction.frame);
        let (fx, fz) = crate::sim::logical_flips(&residual, layout);
        let flags = u8::from(record.logical_flip.0)
            | u8::from(record.logical_flip.1) << 1
            | u8::from(fx || fz) << 2;
        buf.push(flags);
    }
    write_file(path, &buf)
}
