//! Report files for a finished run.
//!
//! Every CSV is a pure function of the configuration; wall-clock timings go
//! to `timings.json` only.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::assembly::{write_matrix_market, write_vector_csv};
use crate::dc_solver::Method;
use crate::error::Result;
use crate::mesh::summary_rows;
use crate::pipeline::{CheckKind, RunResult};
use crate::spectral::write_eigentable;

/// Optional extras.
#[derive(Debug, Clone, Copy, Default)]
pub struct EmitOptions {
    /// Also write S, T, R in Matrix Market format and the excitation vector.
    pub export_matrices: bool,
}

#[derive(Serialize)]
struct FileEntry {
    name: String,
    sha256: String,
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    scenario: &'a str,
    config_sha256: String,
    methods: Vec<&'static str>,
    files: Vec<FileEntry>,
    config: &'a crate::scenario::ScenarioConfig,
}

fn sci(v: f64) -> String {
    format!("{v:.16e}")
}

fn opt(v: Option<f64>) -> String {
    v.map(sci).unwrap_or_default()
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

/// SHA-256 of the canonical JSON form of the configuration.
pub fn config_hash(cfg: &crate::scenario::ScenarioConfig) -> String {
    let canonical = serde_json::to_vec(cfg).expect("config serializes");
    hex::encode(Sha256::digest(canonical))
}

/// `method,rel_err_vs_direct,rel_err_vs_modal` rows.
pub fn write_errors<W: Write>(out: &mut W, run: &RunResult) -> std::io::Result<()> {
    writeln!(out, "method,rel_err_vs_direct,rel_err_vs_modal")?;
    for r in &run.reports {
        writeln!(out, "{},{},{}", r.method.name(), opt(r.error_vs(Method::Direct)), opt(r.error_vs(Method::Modal)))?;
    }
    Ok(())
}

/// `quantity,value,provenance` rows.
pub fn write_validation<W: Write>(out: &mut W, run: &RunResult) -> std::io::Result<()> {
    writeln!(out, "quantity,value,provenance")?;
    writeln!(out, "unknowns,{},mesh", run.mesh.num_unknowns())?;
    writeln!(out, "frequency_hz,{},config", sci(run.config.source.frequency_hz))?;
    for l in &run.layers {
        writeln!(out, "layer{}_nullspace_dim,{},eigensolve", l.layer, l.k)?;
        writeln!(out, "layer{}_gap_ratio,{},eigensolve", l.layer, sci(l.gap.ratio))?;
    }
    if let Some(g) = &run.global_gap {
        writeln!(out, "global_nullspace_dim,{},eigensolve", g.split)?;
        writeln!(out, "global_gap_ratio,{},eigensolve", sci(g.ratio))?;
    }
    if let Some(r) = run.direct_residual {
        writeln!(out, "direct_residual_rel,{},measured:direct", sci(r))?;
    }
    if let Some(e) = run.schur2_region_error {
        writeln!(out, "schur2_region2_rel_err_vs_direct,{},measured:schur2", sci(e))?;
    }
    if let Some(c) = run.analytic_capacitance {
        writeln!(out, "capacitance_f,{},analytic", sci(c))?;
    }
    for p in &run.probes {
        let tag = format!("measured:{}", p.method.name());
        writeln!(out, "voltage_{}_re_v,{},{tag}", p.probe, sci(p.voltage.re))?;
        writeln!(out, "voltage_{}_im_v,{},{tag}", p.probe, sci(p.voltage.im))?;
        if let Some(c) = p.capacitance {
            writeln!(out, "capacitance_{}_f,{},{tag}", p.probe, sci(c.farads()))?;
            writeln!(out, "loss_tangent_{},{},{tag}", p.probe, sci(c.loss_tangent()))?;
            if let Some(c0) = run.analytic_capacitance {
                writeln!(out, "capacitance_{}_rel_dev,{},{tag}", p.probe, sci((c.farads() - c0).abs() / c0))?;
            }
        }
    }
    Ok(())
}

/// `check,kind,value,bound,status` rows.
pub fn write_checks<W: Write>(out: &mut W, run: &RunResult) -> std::io::Result<()> {
    writeln!(out, "check,kind,value,bound,status")?;
    for c in &run.checks {
        let kind = match c.kind {
            CheckKind::Internal => "internal",
            CheckKind::Acceptance => "acceptance",
        };
        let status = if c.passed() { "pass" } else { "fail" };
        writeln!(out, "{},{kind},{},{},{status}", c.name, sci(c.value), sci(c.bound))?;
    }
    Ok(())
}

/// Write all report files into `dir` (created if missing). Returns the
/// written paths, manifest last.
pub fn emit_reports(run: &RunResult, dir: &Path, opts: EmitOptions) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut names: Vec<String> = Vec::new();
    let mut put = |name: &str, f: &dyn Fn(&mut BufWriter<File>) -> std::io::Result<()>| -> Result<()> {
        let mut w = create(dir, name)?;
        f(&mut w)?;
        w.flush()?;
        names.push(name.to_string());
        Ok(())
    };

    put("mesh.csv", &|w| {
        writeln!(w, "quantity,value")?;
        for (k, v) in summary_rows(&run.mesh, Some(&run.partition)) {
            writeln!(w, "{k},{v}")?;
        }
        Ok(())
    })?;
    if let Some((zero, high)) = run.eigentable() {
        put("eigentable.csv", &|w| write_eigentable(w, zero, high))?;
    }
    put("errors.csv", &|w| write_errors(w, run))?;
    put("validation.csv", &|w| write_validation(w, run))?;
    put("checks.csv", &|w| write_checks(w, run))?;
    for r in &run.reports {
        put(&format!("solution_{}.csv", r.method.name()), &|w| write_vector_csv(w, &r.x))?;
    }
    if opts.export_matrices {
        put("stiffness.mtx", &|w| write_matrix_market(w, &run.system.stiffness))?;
        put("mass.mtx", &|w| write_matrix_market(w, &run.system.mass))?;
        put("loss.mtx", &|w| write_matrix_market(w, &run.system.loss))?;
        put("rhs.csv", &|w| write_vector_csv(w, &run.rhs))?;
    }

    let mut files = Vec::new();
    for n in &names {
        files.push(FileEntry { name: n.clone(), sha256: hex::encode(Sha256::digest(std::fs::read(dir.join(n))?)) });
    }
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        scenario: &run.config.name,
        config_sha256: config_hash(&run.config),
        methods: run.config.methods.iter().map(|m| m.as_str()).collect(),
        files,
        config: &run.config,
    };
    let timings: Vec<(String, f64)> = run.timings.iter().map(|(k, d)| (k.clone(), d.as_secs_f64())).collect();
    std::fs::write(dir.join("timings.json"), serde_json::to_string_pretty(&timings).expect("timings serialize"))?;
    std::fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest).expect("manifest serializes"))?;

    let mut paths: Vec<PathBuf> = names.iter().map(|n| dir.join(n)).collect();
    paths.push(dir.join("timings.json"));
    paths.push(dir.join("manifest.json"));
    Ok(paths)
}
