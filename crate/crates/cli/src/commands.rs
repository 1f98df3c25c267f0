//! The `run`, `sweep` and `report` commands. Each builds its output in memory
//! so that nothing is written until every result is in.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use dycore_perf::machine::validate_layout;
use dycore_perf::{
    buffer_sweep, pool_sweep, render_breakdown_chart, safe_ratio, server_sweep, simulate,
    simulate_io, simulate_io_repeated, strong_scaling_study, summarize, IoMetrics, IoScenario,
    IoSummary, MeanSd, RunSpec, ScalingRow, SimError, SweepRow, TimestepBreakdown,
};
use rayon::prelude::*;

use crate::config::{NamedIo, Resolved, ResolvedDyncore};
use crate::error::CliError;
use crate::output::{num, render_columns, summary_table, OutputFile, Table};

pub const DYNCORE_HEADER: [&str; 11] = [
    "mesh", "nodes", "ranks", "threads", "user_s", "p2p_s", "coll_s", "etc_s", "total_s", "run_s",
    "status",
];
pub const NODES_HEADER: [&str; 12] = [
    "mesh", "nodes", "ranks", "threads", "user_s", "p2p_s", "coll_s", "etc_s", "total_s",
    "ideal_s", "run_s", "status",
];
pub const IO_RUNS_HEADER: [&str; 9] = [
    "scenario",
    "run",
    "wall_clock_s",
    "compute_s",
    "client_wait_s",
    "wait_pct",
    "write_rate_mib_s",
    "bytes_written",
    "status",
];
pub const IO_SUMMARY_HEADER: [&str; 10] = [
    "scenario",
    "runs",
    "wall_clock_s_mean",
    "wall_clock_s_sd",
    "wait_pct_mean",
    "wait_pct_sd",
    "write_rate_mib_s_mean",
    "write_rate_mib_s_sd",
    "bytes_written",
    "status",
];
const IO_SWEEP_METRICS: [&str; 6] =
    ["wall_clock_s", "compute_s", "client_wait_s", "wait_pct", "write_rate_mib_s", "bytes_written"];

const OK: &str = "ok";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    pub repeat: u32,
    pub seed: u64,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions { repeat: 1, seed: 0 }
    }
}

fn scaling_row(run: &RunSpec, b: &TimestepBreakdown) -> ScalingRow {
    ScalingRow {
        mesh: run.mesh.panel_size(),
        nodes: run.nodes,
        ranks: b.ranks,
        threads: run.threads_per_rank,
        breakdown: b.clone(),
    }
}

fn run_key(run: &RunSpec) -> Vec<String> {
    vec![
        run.mesh.panel_size().to_string(),
        run.nodes.to_string(),
        run.ranks().to_string(),
        run.threads_per_rank.to_string(),
    ]
}

fn breakdown_cells(b: &TimestepBreakdown) -> Vec<String> {
    [b.user_s, b.mpi_p2p_s, b.mpi_coll_s, b.etc_s, b.total_s].map(num).to_vec()
}

fn dyncore_row(run: &RunSpec, res: &Result<TimestepBreakdown, SimError>) -> Vec<String> {
    let mut row = run_key(run);
    match res {
        Ok(b) => {
            row.extend(breakdown_cells(b));
            row.push(num(b.run_s));
            row.push(OK.into());
        }
        Err(e) => {
            row.extend(std::iter::repeat_n(String::new(), 6));
            row.push(e.to_string());
        }
    }
    row
}

fn io_cells(m: &IoMetrics) -> Vec<String> {
    vec![
        num(m.wall_clock_s),
        num(m.compute_s),
        num(m.client_wait_s),
        num(m.client_wait_pct),
        num(m.server_write_rate_mib_s),
        m.bytes_written.to_string(),
    ]
}

fn case_label(run: &RunSpec) -> String {
    format!("C{} {}n {}t", run.mesh.panel_size(), run.nodes, run.threads_per_rank)
}

/// The entry's scenario with its compute rate taken from the coupled dyncore
/// run when it asks for one. `step(i)` yields the result of run `i`.
fn coupled_scenario(
    entry: &NamedIo,
    dyncore: Option<&ResolvedDyncore>,
    step: impl Fn(usize) -> Result<TimestepBreakdown, SimError>,
) -> Result<IoScenario, CliError> {
    let Some(c) = &entry.compute_from_dyncore else {
        return Ok(entry.scenario.clone());
    };
    let d = dyncore.expect("coupling validated against the dyncore section");
    let index = c.case * d.layouts.len() + c.layout;
    match step(index) {
        Ok(b) => Ok(entry.scenario.clone().with_compute_from(&b, c.timesteps_per_hour)),
        Err(e) => Err(CliError::simulation(format!(
            "io {}: coupled run {} failed: {e}",
            entry.name,
            case_label(&d.runs[index])
        ))),
    }
}

fn run_io(s: &IoScenario, opts: RunOptions) -> Result<Vec<IoMetrics>, dycore_perf::IoSimError> {
    if opts.repeat == 1 {
        simulate_io(s).map(|m| vec![m])
    } else {
        simulate_io_repeated(s, opts.repeat, opts.seed)
    }
}

/// Everything a config asks for. A config with a single simulation point
/// fails with [`CliError::Simulation`] when that point fails; in larger grids
/// failures become rows with the reason in `status`.
pub fn run(cfg: &Resolved, opts: RunOptions) -> Result<Vec<OutputFile>, CliError> {
    if opts.repeat == 0 {
        return Err(CliError::config("--repeat must be at least 1"));
    }
    let single = cfg.points() == 1;
    let mut files = Vec::new();
    let mut summary = String::new();

    let dyn_results: Vec<Result<TimestepBreakdown, SimError>> = match &cfg.dyncore {
        Some(d) => d.runs.par_iter().map(simulate).collect(),
        None => Vec::new(),
    };
    if let Some(d) = &cfg.dyncore {
        if single {
            if let Err(e) = &dyn_results[0] {
                return Err(CliError::simulation(format!("{}: {e}", case_label(&d.runs[0]))));
            }
        }
        let mut table = Table::new(&DYNCORE_HEADER);
        let mut chart_rows = Vec::new();
        let mut failures = String::new();
        for (run, res) in d.runs.iter().zip(&dyn_results) {
            table.push(dyncore_row(run, res));
            match res {
                Ok(b) => chart_rows.push(scaling_row(run, b)),
                Err(e) => failures.push_str(&format!("  {}: {e}\n", case_label(run))),
            }
        }
        files.push(table.into_file("dyncore.csv"));
        summary
            .push_str(&format!("Dynamical core on {}, seconds per timestep\n", cfg.machine.name));
        summary.push_str(&render_breakdown_chart(&chart_rows, 60));
        if !failures.is_empty() {
            summary.push_str("not run:\n");
            summary.push_str(&failures);
        }
    }

    if !cfg.io.is_empty() {
        let mut runs_table = Table::new(&IO_RUNS_HEADER);
        let mut summary_csv = Table::new(&IO_SUMMARY_HEADER);
        let mut summaries = Vec::new();
        for entry in &cfg.io {
            let outcome = coupled_scenario(entry, cfg.dyncore.as_ref(), |i| dyn_results[i].clone())
                .and_then(|s| run_io(&s, opts).map_err(|e| CliError::from_io(&entry.name, e)));
            let runs = match outcome {
                Ok(runs) => runs,
                Err(e @ (CliError::Config(_) | CliError::Io(_))) => return Err(e),
                Err(e) if single => return Err(e),
                Err(e) => {
                    let mut row = vec![entry.name.clone(), String::new()];
                    row.extend(std::iter::repeat_n(String::new(), 6));
                    row.push(e.to_string());
                    runs_table.push(row);
                    let mut row = vec![entry.name.clone(), "0".into()];
                    row.extend(std::iter::repeat_n(String::new(), 7));
                    row.push(e.to_string());
                    summary_csv.push(row);
                    summaries.push(None);
                    continue;
                }
            };
            for (i, m) in runs.iter().enumerate() {
                let mut row = vec![entry.name.clone(), i.to_string()];
                row.extend(io_cells(m));
                row.push(OK.into());
                runs_table.push(row);
            }
            let s = summarize(&runs);
            let mut row = vec![entry.name.clone(), s.runs.to_string()];
            for ms in [s.wall_clock_s, s.client_wait_pct, s.server_write_rate_mib_s] {
                row.push(num(ms.mean));
                row.push(num(ms.sd));
            }
            row.push(runs[0].bytes_written.to_string());
            row.push(OK.into());
            summary_csv.push(row);
            summaries.push(Some(s));
        }
        files.push(runs_table.into_file("io_runs.csv"));
        files.push(summary_csv.into_file("io_summary.csv"));
        if !summary.is_empty() {
            summary.push('\n');
        }
        summary.push_str("I/O servers, mean ± sd over runs\n");
        let names: Vec<&str> = cfg.io.iter().map(|e| e.name.as_str()).collect();
        summary.push_str(&summary_table(&names, &summaries));
    }
    files.push(OutputFile { name: "summary.txt".into(), bytes: summary.into_bytes() });
    Ok(files)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, ValueEnum)]
pub enum Axis {
    Threads,
    Nodes,
    #[value(name = "buffer_bytes")]
    BufferBytes,
    Servers,
    Pools,
}

impl Axis {
    pub fn name(self) -> &'static str {
        match self {
            Axis::Threads => "threads",
            Axis::Nodes => "nodes",
            Axis::BufferBytes => "buffer_bytes",
            Axis::Servers => "servers",
            Axis::Pools => "pools",
        }
    }
}

fn axis_values<T: Clone>(values: &Option<Vec<T>>, axis: Axis) -> Result<Vec<T>, CliError> {
    match values {
        Some(v) if !v.is_empty() => Ok(v.clone()),
        Some(_) => Err(CliError::config(format!("sweep.{} is empty", axis.name()))),
        None => Err(CliError::config(format!(
            "axis {} requested but sweep.{} is not set in the config",
            axis.name(),
            axis.name()
        ))),
    }
}

fn need_dyncore(cfg: &Resolved, axis: Axis) -> Result<&ResolvedDyncore, CliError> {
    cfg.dyncore
        .as_ref()
        .ok_or_else(|| CliError::config(format!("axis {} needs a dyncore section", axis.name())))
}

/// One CSV per axis, in the order given; repeated axes are swept once.
pub fn sweep(cfg: &Resolved, axes: &[Axis]) -> Result<Vec<OutputFile>, CliError> {
    if axes.is_empty() {
        return Err(CliError::config("no sweep axis given (use --axis)"));
    }
    let mut seen = Vec::new();
    for a in axes {
        if !seen.contains(a) {
            seen.push(*a);
        }
    }
    // Check every axis before running any of them.
    for &a in &seen {
        match a {
            Axis::Threads => {
                need_dyncore(cfg, a)?;
                for t in axis_values(&cfg.sweep.threads, a)? {
                    let cores = cfg.machine.cores_per_node;
                    let rpn = cores.checked_div(t).unwrap_or(0);
                    validate_layout(&cfg.machine, rpn, t)
                        .map_err(|e| CliError::config(format!("sweep.threads: {e}")))?;
                }
            }
            Axis::Nodes => {
                need_dyncore(cfg, a)?;
                for n in axis_values(&cfg.sweep.nodes, a)? {
                    if n == 0 || n > cfg.machine.max_nodes {
                        return Err(CliError::config(format!(
                            "sweep.nodes: {n} outside 1..={}",
                            cfg.machine.max_nodes
                        )));
                    }
                }
            }
            Axis::BufferBytes => drop(axis_values(&cfg.sweep.buffer_bytes, a)?),
            Axis::Servers => drop(axis_values(&cfg.sweep.servers, a)?),
            Axis::Pools => drop(axis_values(&cfg.sweep.pools, a)?),
        }
        if matches!(a, Axis::BufferBytes | Axis::Servers | Axis::Pools) {
            cfg.io_scenario(cfg.sweep.io_scenario.as_deref())?;
        }
    }
    seen.iter()
        .map(|&a| {
            let table = match a {
                Axis::Threads => thread_table(cfg)?,
                Axis::Nodes => nodes_table(cfg)?,
                _ => io_sweep_table(cfg, a)?,
            };
            Ok(table.into_file(&format!("sweep_{}.csv", a.name())))
        })
        .collect()
}

fn thread_table(cfg: &Resolved) -> Result<Table, CliError> {
    let d = need_dyncore(cfg, Axis::Threads)?;
    let threads = axis_values(&cfg.sweep.threads, Axis::Threads)?;
    let runs: Vec<RunSpec> = (0..d.cases.len())
        .flat_map(|c| threads.iter().map(move |&t| d.run(c, 0).clone().with_threads(t)))
        .collect();
    let results: Vec<_> = runs.par_iter().map(simulate).collect();
    let mut table = Table::new(&DYNCORE_HEADER);
    for (run, res) in runs.iter().zip(&results) {
        table.push(dyncore_row(run, res));
    }
    Ok(table)
}

fn nodes_table(cfg: &Resolved) -> Result<Table, CliError> {
    let d = need_dyncore(cfg, Axis::Nodes)?;
    let nodes = axis_values(&cfg.sweep.nodes, Axis::Nodes)?;
    let mut table = Table::new(&NODES_HEADER);
    for base in &d.runs {
        let study = strong_scaling_study(base, &nodes).map_err(|e| {
            CliError::simulation(format!("strong scaling from {}: {e}", case_label(base)))
        })?;
        let mut rows: Vec<(u32, Vec<String>)> = Vec::new();
        for r in &study.rows {
            let run = base.clone().with_nodes(r.row.nodes);
            let mut row = run_key(&run);
            row.extend(breakdown_cells(&r.row.breakdown));
            row.push(num(r.ideal_s));
            row.push(num(r.row.breakdown.run_s));
            row.push(OK.into());
            rows.push((r.row.nodes, row));
        }
        for s in &study.skipped {
            let mut row = run_key(&base.clone().with_nodes(s.nodes));
            row.extend(std::iter::repeat_n(String::new(), 7));
            row.push(s.reason.to_string());
            rows.push((s.nodes, row));
        }
        rows.sort_by_key(|(n, _)| *n);
        for (_, row) in rows {
            table.push(row);
        }
    }
    Ok(table)
}

fn io_sweep_table(cfg: &Resolved, axis: Axis) -> Result<Table, CliError> {
    let entry = cfg.io_scenario(cfg.sweep.io_scenario.as_deref())?;
    let scenario = coupled_scenario(entry, cfg.dyncore.as_ref(), |i| {
        simulate(&cfg.dyncore.as_ref().expect("coupled").runs[i])
    })?;
    let context = format!("sweep {} on {}", axis.name(), entry.name);
    let rows: Vec<SweepRow> = match axis {
        Axis::BufferBytes => buffer_sweep(&scenario, &axis_values(&cfg.sweep.buffer_bytes, axis)?),
        Axis::Servers => server_sweep(&scenario, &axis_values(&cfg.sweep.servers, axis)?),
        Axis::Pools => pool_sweep(&scenario, &axis_values(&cfg.sweep.pools, axis)?),
        Axis::Threads | Axis::Nodes => unreachable!("dyncore axes handled elsewhere"),
    }
    .map_err(|e| CliError::from_io(&context, e))?;
    let mut header = vec![axis.name()];
    header.extend(IO_SWEEP_METRICS);
    let mut table = Table::new(&header);
    for r in rows {
        let mut row = vec![r.value.to_string()];
        row.extend(io_cells(&r.metrics));
        table.push(row);
    }
    Ok(table)
}

struct CsvFile {
    path: PathBuf,
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

fn read_csv(path: &Path) -> Result<CsvFile, CliError> {
    let fail = |e: csv::Error| CliError::config(format!("{}: {e}", path.display()));
    let mut r = csv::Reader::from_path(path).map_err(fail)?;
    let header = r.headers().map_err(fail)?.iter().map(str::to_string).collect();
    let rows = r
        .records()
        .map(|rec| rec.map(|r| r.iter().map(str::to_string).collect()))
        .collect::<Result<_, _>>()
        .map_err(fail)?;
    Ok(CsvFile { path: path.to_path_buf(), header, rows })
}

fn schema_name(header: &[String]) -> Option<&'static str> {
    let is = |h: &[&str]| header.iter().map(String::as_str).eq(h.iter().copied());
    if is(&DYNCORE_HEADER) {
        Some("dyncore")
    } else if is(&NODES_HEADER) {
        Some("strong scaling")
    } else if is(&IO_RUNS_HEADER) {
        Some("io runs")
    } else if is(&IO_SUMMARY_HEADER) {
        Some("io summary")
    } else if header.len() == 1 + IO_SWEEP_METRICS.len()
        && ["buffer_bytes", "servers", "pools"].contains(&header[0].as_str())
        && header[1..].iter().map(String::as_str).eq(IO_SWEEP_METRICS)
    {
        Some("io sweep")
    } else {
        None
    }
}

fn is_metric(column: &str, first: bool) -> bool {
    !first
        && (column.ends_with("_s")
            || column.ends_with("_pct")
            || column.ends_with("_mean")
            || column.ends_with("_sd")
            || column == "bytes_written")
}

/// Ratio of the first file to each of the others, metric by metric, and a
/// mean ± sd table for I/O results. Files must share a schema and row keys.
pub fn report(paths: &[PathBuf]) -> Result<String, CliError> {
    if paths.is_empty() {
        return Err(CliError::config("report needs at least one CSV file"));
    }
    let files = paths.iter().map(|p| read_csv(p)).collect::<Result<Vec<_>, _>>()?;
    let first = &files[0];
    let schema = schema_name(&first.header).ok_or_else(|| {
        CliError::config(format!(
            "{}: unrecognised columns {}",
            first.path.display(),
            first.header.join(",")
        ))
    })?;
    let metric: Vec<bool> =
        first.header.iter().enumerate().map(|(i, c)| is_metric(c, i == 0)).collect();
    for f in &files[1..] {
        if f.header != first.header {
            return Err(CliError::config(format!(
                "schema mismatch: {} has columns {}, {} has {}",
                first.path.display(),
                first.header.join(","),
                f.path.display(),
                f.header.join(",")
            )));
        }
        if f.rows.len() != first.rows.len() {
            return Err(CliError::config(format!(
                "schema mismatch: {} has {} rows, {} has {}",
                first.path.display(),
                first.rows.len(),
                f.path.display(),
                f.rows.len()
            )));
        }
        for (k, (a, b)) in first.rows.iter().zip(&f.rows).enumerate() {
            let key = |r: &Vec<String>| -> Vec<String> {
                r.iter().zip(&metric).filter(|(_, m)| !**m).map(|(v, _)| v.clone()).collect()
            };
            let (ka, kb) = (key(a), key(b));
            // Status differs freely; it is reported, not matched.
            let strip = |mut v: Vec<String>| {
                if first.header.last().map(String::as_str) == Some("status") {
                    v.pop();
                }
                v
            };
            if strip(ka.clone()) != strip(kb.clone()) {
                return Err(CliError::config(format!(
                    "row {} keys differ: {} in {} vs {} in {}",
                    k + 1,
                    ka.join(","),
                    first.path.display(),
                    kb.join(","),
                    f.path.display()
                )));
            }
        }
    }

    let mut out = format!("{} table, {} file(s)\n", schema, files.len());
    for (i, f) in files.iter().enumerate() {
        out.push_str(&format!("  [{i}] {}\n", f.path.display()));
    }
    for (i, f) in files.iter().enumerate().skip(1) {
        out.push_str(&format!("\nratio [0] / [{i}]\n"));
        let mut rows = vec![(
            String::new(),
            first.header.iter().zip(&metric).map(|(c, _)| c.clone()).collect::<Vec<_>>(),
        )];
        for (a, b) in first.rows.iter().zip(&f.rows) {
            let cells = a
                .iter()
                .zip(b)
                .zip(&metric)
                .map(|((x, y), &m)| {
                    if !m {
                        return x.clone();
                    }
                    match (x.parse::<f64>(), y.parse::<f64>()) {
                        (Ok(x), Ok(y)) => format!("{:.4}", safe_ratio(x, y)),
                        _ => "-".into(),
                    }
                })
                .collect();
            rows.push((String::new(), cells));
        }
        out.push_str(&render_columns(&rows));
    }

    if schema == "io runs" || schema == "io summary" {
        for (i, f) in files.iter().enumerate() {
            let (names, summaries) = io_summaries(f, schema == "io runs")?;
            let names: Vec<&str> = names.iter().map(String::as_str).collect();
            out.push_str(&format!("\nmean ± sd, [{i}]\n"));
            out.push_str(&summary_table(&names, &summaries));
        }
    }
    Ok(out)
}

fn io_summaries(
    f: &CsvFile,
    from_runs: bool,
) -> Result<(Vec<String>, Vec<Option<IoSummary>>), CliError> {
    let col = |name: &str| f.header.iter().position(|c| c == name).expect("known schema");
    let value = |row: &Vec<String>, name: &str| -> Result<f64, CliError> {
        row[col(name)].parse::<f64>().map_err(|_| {
            CliError::config(format!(
                "{}: bad number {:?} in {name}",
                f.path.display(),
                row[col(name)]
            ))
        })
    };
    let status = col("status");
    let mut order: Vec<String> = Vec::new();
    let mut groups: BTreeMap<String, Vec<&Vec<String>>> = BTreeMap::new();
    for row in &f.rows {
        let name = &row[col("scenario")];
        if !order.contains(name) {
            order.push(name.clone());
        }
        if row[status] == OK {
            groups.entry(name.clone()).or_default().push(row);
        }
    }
    let mut summaries = Vec::new();
    for name in &order {
        let rows = groups.get(name).cloned().unwrap_or_default();
        if rows.is_empty() {
            summaries.push(None);
            continue;
        }
        let s = if from_runs {
            let series = |c: &str| -> Result<MeanSd, CliError> {
                let v = rows.iter().map(|r| value(r, c)).collect::<Result<Vec<_>, _>>()?;
                Ok(MeanSd::of(&v))
            };
            IoSummary {
                runs: rows.len(),
                wall_clock_s: series("wall_clock_s")?,
                client_wait_pct: series("wait_pct")?,
                server_write_rate_mib_s: series("write_rate_mib_s")?,
            }
        } else {
            let r = rows[0];
            let pair = |c: &str| -> Result<MeanSd, CliError> {
                Ok(MeanSd {
                    mean: value(r, &format!("{c}_mean"))?,
                    sd: value(r, &format!("{c}_sd"))?,
                })
            };
            IoSummary {
                runs: value(r, "runs")? as usize,
                wall_clock_s: pair("wall_clock_s")?,
                client_wait_pct: pair("wait_pct")?,
                server_write_rate_mib_s: pair("write_rate_mib_s")?,
            }
        };
        summaries.push(Some(s));
    }
    Ok((order, summaries))
}
