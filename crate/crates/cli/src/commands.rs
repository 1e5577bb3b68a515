use std::path::{Path, PathBuf};

use nhssa::bench::{preset, render_markdown, run_experiment, ExperimentSpec, RunStats};
use nhssa::embedding::{condition_grid_search, ConditionGrid};
use nhssa::io::{read_series, write_series};
use nhssa::pencil::RankPolicy;
use nhssa::pipeline::{run_pipeline, PipelineConfig};
use nhssa::signal::{generate_noise, synthesize_signal};
use nhssa::Series;

use crate::error::{CliError, Result};
use crate::session::{to_sorted_json, Session};

pub const SESSION_FILE: &str = "session.json";

/// `gap` or `fixed:N`.
pub fn parse_rank(s: &str) -> Result<RankPolicy> {
    if s == "gap" {
        return Ok(RankPolicy::default());
    }
    let n = s
        .strip_prefix("fixed:")
        .and_then(|n| n.parse::<usize>().ok())
        .filter(|&n| n > 0)
        .ok_or_else(|| {
            CliError::Usage(format!("bad rank policy '{s}', expected gap or fixed:N"))
        })?;
    Ok(RankPolicy::Fixed { rank: n })
}

/// `A:B` with `A <= B`.
pub fn parse_range(s: &str) -> Result<(usize, usize)> {
    let bad = || CliError::Usage(format!("bad range '{s}', expected A:B"));
    let (a, b) = s.split_once(':').ok_or_else(bad)?;
    let a: usize = a.trim().parse().map_err(|_| bad())?;
    let b: usize = b.trim().parse().map_err(|_| bad())?;
    if a == 0 || a > b {
        return Err(bad());
    }
    Ok((a, b))
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn read_input(path: &Path) -> Result<Series> {
    if !path.exists() {
        return Err(CliError::Usage(format!(
            "input {} does not exist",
            path.display()
        )));
    }
    Ok(read_series(path)?)
}

#[derive(Debug, Clone)]
pub struct DecomposeOptions {
    pub input: PathBuf,
    pub config: PipelineConfig,
    pub out: PathBuf,
    pub seed: Option<u64>,
}

/// Runs the pipeline and writes `session.json`, `shat.json`, `what.json`
/// and one `component_<j>.json` per retained row.
pub fn cmd_decompose(opts: &DecomposeOptions) -> Result<Session> {
    let f = read_input(&opts.input)?;
    let res = run_pipeline(&f, &opts.config)?;
    for w in &res.warnings {
        log::warn!("{w}");
    }
    let source = opts
        .input
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let session = Session::from_result(res, &f, &opts.config, opts.seed, &source)?;
    create_dir(&opts.out)?;
    session.save(&opts.out.join(SESSION_FILE))?;
    let rec = &session.derived.reconstruction;
    write_series(&rec.shat, Some("shat"), &opts.out.join("shat.json"))?;
    write_series(&rec.what, Some("what"), &opts.out.join("what.json"))?;
    for (j, c) in session.components.iter().enumerate() {
        let tag = format!("component_{j}");
        write_series(c, Some(&tag), &opts.out.join(format!("{tag}.json")))?;
    }
    Ok(session)
}

/// Writes `report.json`, `report.md` and `hist_<estimator>.csv`.
pub fn cmd_bench(spec: &ExperimentSpec, out: &Path) -> Result<RunStats> {
    let stats = run_experiment(spec)?;
    create_dir(out)?;
    write_text(&out.join("report.json"), &to_sorted_json(&stats)?)?;
    write_text(&out.join("report.md"), &render_markdown(&stats))?;
    for e in &stats.estimators {
        write_text(
            &out.join(format!("hist_{}.csv", e.estimator)),
            &e.histogram.to_csv(),
        )?;
    }
    Ok(stats)
}

pub fn load_spec(preset_name: Option<&str>, spec_file: Option<&Path>) -> Result<ExperimentSpec> {
    match (preset_name, spec_file) {
        (Some(name), None) => Ok(preset(name)?),
        (None, Some(path)) => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            serde_json::from_str(&text)
                .map_err(|e| CliError::Usage(format!("bad experiment spec: {e}")))
        }
        _ => Err(CliError::Usage(
            "give exactly one of --preset or --spec".into(),
        )),
    }
}

/// Writes `grid.json` and `grid.csv`.
pub fn cmd_grid(
    input: &Path,
    d_range: (usize, usize),
    mbar_range: (usize, usize),
    out: &Path,
) -> Result<ConditionGrid> {
    let f = read_input(input)?;
    let grid = condition_grid_search(&f, d_range.0..=d_range.1, mbar_range.0..=mbar_range.1)?;
    create_dir(out)?;
    write_text(&out.join("grid.json"), &to_sorted_json(&grid)?)?;
    write_text(&out.join("grid.csv"), &grid.to_csv())?;
    Ok(grid)
}

/// One realization of a preset: signal plus scaled noise drawn from `seed`.
pub fn cmd_synth(
    preset_name: &str,
    seed: Option<u64>,
    epsilon: Option<f64>,
    out: &Path,
) -> Result<Series> {
    let spec = preset(preset_name)?;
    let mut noise = spec.noise.with_seed(seed.unwrap_or(spec.noise.seed));
    if let Some(eps) = epsilon {
        noise.epsilon = eps;
    }
    let s: Series = synthesize_signal(&spec.signal, spec.m)?;
    let w: Series = generate_noise(&noise, spec.m)?;
    let f = s.add(&w)?;
    if let Some(dir) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    write_series(&f, Some(preset_name), out)?;
    Ok(f)
}
