//! Table and image writers. Floats are written in shortest round-trip form,
//! so re-running a request reproduces every file byte for byte.

use std::io::{self, Write};

use serde::Serialize;

use super::{PhiOptimization, SensitivityMap, SweepRequest, SweepTable, ValidationReport};

/// Bumped whenever a CSV column is added, removed or renamed.
pub const CSV_SCHEMA_VERSION: u32 = 1;

pub const SWEEP_CSV_HEADER: &str = "phi_b,mean_N,delta_N,dN_dphi,delta_phi_sq,snl_sq,S2_db,phi_su";
pub const MAP_CSV_HEADER: &str = "phi_b,delta,S2_db,phi_su";

/// Limits of the linear gray scale: black at `PGM_MIN_DB`, white at
/// `PGM_MAX_DB`, clamped outside.
pub const PGM_MIN_DB: f64 = -15.0;
pub const PGM_MAX_DB: f64 = 15.0;

pub fn write_sweep_csv<W: Write>(table: &SweepTable, mut w: W) -> io::Result<()> {
    writeln!(w, "{SWEEP_CSV_HEADER}")?;
    for r in &table.rows {
        writeln!(
            w,
            "{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?}",
            r.phi_b, r.mean_n, r.delta_n, r.dn_dphi, r.delta_phi_sq, r.snl_sq, r.s2_db, r.phi_su
        )?;
    }
    w.flush()
}

/// Long form, one line per grid point, `φ_b` varying fastest.
pub fn write_map_csv<W: Write>(map: &SensitivityMap, mut w: W) -> io::Result<()> {
    writeln!(w, "{MAP_CSV_HEADER}")?;
    let cols = map.phi_b.len();
    for (k, (s2, phi_su)) in map.s2_db.iter().zip(&map.phi_su).enumerate() {
        writeln!(
            w,
            "{:?},{:?},{:?},{:?}",
            map.phi_b[k % cols],
            map.delta[k / cols],
            s2,
            phi_su
        )?;
    }
    w.flush()
}

#[derive(Serialize)]
struct Metadata<'a> {
    generator: &'static str,
    version: &'static str,
    csv_schema_version: u32,
    kind: &'static str,
    request: &'a SweepRequest,
}

impl<'a> Metadata<'a> {
    fn new(kind: &'static str, request: &'a SweepRequest) -> Self {
        Metadata {
            generator: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            csv_schema_version: CSV_SCHEMA_VERSION,
            kind,
            request,
        }
    }
}

#[derive(Serialize)]
struct SweepDocument<'a> {
    metadata: Metadata<'a>,
    columns: Vec<&'static str>,
    rows: Vec<[f64; 8]>,
}

#[derive(Serialize)]
struct MapDocument<'a> {
    metadata: Metadata<'a>,
    phi_b: &'a [f64],
    delta: &'a [f64],
    /// `s2_db[i][j]` belongs to `delta[i]`, `phi_b[j]`.
    s2_db: Vec<&'a [f64]>,
    phi_su: Vec<&'a [f64]>,
    cap_db: f64,
}

/// JSON cannot hold infinities; insensitive sweep rows show `null` there.
pub fn write_sweep_json<W: Write>(table: &SweepTable, mut w: W) -> io::Result<()> {
    let doc = SweepDocument {
        metadata: Metadata::new("phase_sweep", &table.request),
        columns: SWEEP_CSV_HEADER.split(',').collect(),
        rows: table
            .rows
            .iter()
            .map(|r| {
                [
                    r.phi_b,
                    r.mean_n,
                    r.delta_n,
                    r.dn_dphi,
                    r.delta_phi_sq,
                    r.snl_sq,
                    r.s2_db,
                    r.phi_su,
                ]
            })
            .collect(),
    };
    serde_json::to_writer_pretty(&mut w, &doc)?;
    writeln!(w)?;
    w.flush()
}

pub fn write_map_json<W: Write>(map: &SensitivityMap, mut w: W) -> io::Result<()> {
    let cols = map.phi_b.len().max(1);
    let doc = MapDocument {
        metadata: Metadata::new("sensitivity_map", &map.request),
        phi_b: &map.phi_b,
        delta: &map.delta,
        s2_db: map.s2_db.chunks(cols).collect(),
        phi_su: map.phi_su.chunks(cols).collect(),
        cap_db: super::MAP_CAP_DB,
    };
    serde_json::to_writer_pretty(&mut w, &doc)?;
    writeln!(w)?;
    w.flush()
}

pub fn write_optimization_json<W: Write>(opt: &PhiOptimization, request: &SweepRequest, mut w: W) -> io::Result<()> {
    #[derive(Serialize)]
    struct Doc<'a> {
        metadata: Metadata<'a>,
        result: &'a PhiOptimization,
    }
    serde_json::to_writer_pretty(
        &mut w,
        &Doc {
            metadata: Metadata::new("phi_su_optimization", request),
            result: opt,
        },
    )?;
    writeln!(w)?;
    w.flush()
}

pub fn write_validation_json<W: Write>(report: &ValidationReport, mut w: W) -> io::Result<()> {
    serde_json::to_writer_pretty(&mut w, report)?;
    writeln!(w)?;
    w.flush()
}

/// Gray level of an `S²` value in dB.
pub fn gray_level(s2_db: f64) -> u8 {
    if s2_db.is_nan() {
        return 255;
    }
    let x = (s2_db - PGM_MIN_DB) / (PGM_MAX_DB - PGM_MIN_DB);
    (x.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Binary graymap (`P5`): one column per `φ_b`, one row per `δ`, first row
/// at the first `δ`.
pub fn write_map_pgm<W: Write>(map: &SensitivityMap, mut w: W) -> io::Result<()> {
    writeln!(w, "P5")?;
    writeln!(
        w,
        "# S2 in dB, linear gray scale: {PGM_MIN_DB:?} dB -> 0, {PGM_MAX_DB:?} dB -> 255, clamped outside"
    )?;
    writeln!(
        w,
        "# columns: phi_b from {:?} to {:?}; rows: delta from {:?} to {:?}",
        map.phi_b.first().copied().unwrap_or(0.0),
        map.phi_b.last().copied().unwrap_or(0.0),
        map.delta.first().copied().unwrap_or(0.0),
        map.delta.last().copied().unwrap_or(0.0),
    )?;
    writeln!(w, "{} {}", map.phi_b.len(), map.delta.len())?;
    writeln!(w, "255")?;
    let pixels: Vec<u8> = map.s2_db.iter().map(|&v| gray_level(v)).collect();
    w.write_all(&pixels)?;
    w.flush()
}
