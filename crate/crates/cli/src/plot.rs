//! Learning curves from metrics CSVs: mean across seeds with a standard
//! error band, for training returns (binned) and test returns.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use icql_core::experiment::{mean_stderr, read_metrics};
use icql_core::MetricsRow;
use plotters::prelude::*;

/// One aggregated curve on a shared episode grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub episode: Vec<u64>,
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
    pub n_seeds: usize,
}

/// Every `seed_*.csv` in `dir`, ordered by seed.
pub fn load_runs(dir: &Path) -> Result<Vec<Vec<MetricsRow>>> {
    let mut paths: Vec<(u64, PathBuf)> = std::fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter_map(|p| {
            let seed = p
                .file_name()?
                .to_str()?
                .strip_prefix("seed_")?
                .strip_suffix(".csv")?
                .parse()
                .ok()?;
            Some((seed, p))
        })
        .collect();
    if paths.is_empty() {
        bail!("no seed_*.csv files in {}", dir.display());
    }
    paths.sort();
    paths
        .iter()
        .map(|(_, p)| read_metrics(p).with_context(|| format!("reading {}", p.display())))
        .collect()
}

/// Truncates every run to the shortest one. Returns whether anything was cut.
pub fn align(runs: &mut [Vec<MetricsRow>]) -> bool {
    let shortest = runs.iter().map(Vec::len).min().unwrap_or(0);
    let mut cut = false;
    for r in runs.iter_mut() {
        if r.len() > shortest {
            r.truncate(shortest);
            cut = true;
        }
    }
    cut
}

/// Mean and standard error across seeds at each grid point. Every seed
/// must provide the same grid.
pub fn aggregate(per_seed: &[Vec<(u64, f64)>]) -> Result<Series> {
    let first = per_seed.first().ok_or_else(|| anyhow!("no seeds to aggregate"))?;
    let grid: Vec<u64> = first.iter().map(|p| p.0).collect();
    for s in per_seed {
        if s.iter().map(|p| p.0).ne(grid.iter().copied()) {
            bail!("seeds disagree on the episode grid");
        }
    }
    let mut series = Series {
        episode: grid.clone(),
        mean: Vec::with_capacity(grid.len()),
        stderr: Vec::with_capacity(grid.len()),
        n_seeds: per_seed.len(),
    };
    for i in 0..grid.len() {
        let values: Vec<f64> = per_seed.iter().map(|s| s[i].1).collect();
        let e = mean_stderr(&values);
        series.mean.push(e.mean);
        series.stderr.push(e.stderr);
    }
    Ok(series)
}

/// Training returns averaged over consecutive bins of `window` episodes,
/// placed at the last episode of each complete bin.
pub fn train_series(runs: &[Vec<MetricsRow>], window: usize) -> Result<Series> {
    let window = window.max(1);
    let per_seed: Vec<Vec<(u64, f64)>> = runs
        .iter()
        .map(|rows| {
            rows.chunks_exact(window)
                .map(|c| {
                    let m = c.iter().map(|r| r.train_return).sum::<f64>() / c.len() as f64;
                    (c[c.len() - 1].episode, m)
                })
                .collect()
        })
        .collect();
    aggregate(&per_seed)
}

pub fn test_series(runs: &[Vec<MetricsRow>]) -> Result<Series> {
    let per_seed: Vec<Vec<(u64, f64)>> = runs
        .iter()
        .map(|rows| rows.iter().filter_map(|r| Some((r.episode, r.test_return_mean?))).collect())
        .collect();
    aggregate(&per_seed)
}

pub fn write_aggregate_csv(path: &Path, curves: &[(&str, &str, &Series)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["group", "panel", "episode", "mean", "stderr", "n_seeds"])?;
    for (group, panel, s) in curves {
        for i in 0..s.episode.len() {
            w.write_record([
                group.to_string(),
                panel.to_string(),
                s.episode[i].to_string(),
                s.mean[i].to_string(),
                s.stderr[i].to_string(),
                s.n_seeds.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

const PALETTE: [RGBColor; 6] = [
    RGBColor(31, 119, 180),
    RGBColor(214, 39, 40),
    RGBColor(44, 160, 44),
    RGBColor(255, 127, 14),
    RGBColor(148, 103, 189),
    RGBColor(140, 86, 75),
];

/// Mean lines with shaded ±1 standard error bands.
pub fn render(path: &Path, title: &str, curves: &[(&str, &Series)]) -> Result<()> {
    let x_max = curves
        .iter()
        .flat_map(|(_, s)| s.episode.iter().copied())
        .max()
        .unwrap_or(1)
        .max(1) as f64;
    let (mut y_min, mut y_max) = (0.0f64, 1.0f64);
    for (_, s) in curves {
        for i in 0..s.mean.len() {
            y_min = y_min.min(s.mean[i] - s.stderr[i]);
            y_max = y_max.max(s.mean[i] + s.stderr[i]);
        }
    }
    let pad = 0.05 * (y_max - y_min);
    let root = SVGBackend::new(path, (800, 500)).into_drawing_area();
    let err = |e: DrawingAreaErrorKind<_>| anyhow!("drawing {}: {e:?}", path.display());
    root.fill(&WHITE).map_err(err)?;
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 22))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(50)
        .build_cartesian_2d(0.0..x_max, (y_min - pad)..(y_max + pad))
        .map_err(err)?;
    chart
        .configure_mesh()
        .x_desc("episodes")
        .y_desc("return")
        .draw()
        .map_err(err)?;
    for (k, (name, s)) in curves.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let upper = s.episode.iter().zip(&s.mean).zip(&s.stderr).map(|((&e, &m), &d)| (e as f64, m + d));
        let lower = s.episode.iter().zip(&s.mean).zip(&s.stderr).map(|((&e, &m), &d)| (e as f64, m - d));
        let band: Vec<(f64, f64)> = upper.chain(lower.rev()).collect();
        chart
            .draw_series(std::iter::once(Polygon::new(band, color.mix(0.2))))
            .map_err(err)?;
        chart
            .draw_series(LineSeries::new(
                s.episode.iter().zip(&s.mean).map(|(&e, &m)| (e as f64, m)),
                color.stroke_width(2),
            ))
            .map_err(err)?
            .label(*name)
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], color.stroke_width(2)));
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()
        .map_err(err)?;
    root.present().map_err(err)?;
    Ok(())
}

fn group_name(dir: &Path) -> String {
    dir.file_name()
        .and_then(|n| n.to_str())
        .filter(|n| !n.is_empty() && *n != ".")
        .unwrap_or("run")
        .to_string()
}

/// Writes `<group>_train.svg`, `<group>_test.svg` per run directory, the
/// overlaid `train.svg`/`test.svg` when there are several groups, and
/// `aggregate.csv` with every plotted point.
pub fn plot_dirs(dirs: &[PathBuf], out: &Path, window: usize) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let mut groups = Vec::new();
    for dir in dirs {
        let name = group_name(dir);
        let mut runs = load_runs(dir)?;
        if align(&mut runs) {
            log::warn!("{name}: seeds have different lengths; truncated to the shortest");
        }
        let train = train_series(&runs, window)?;
        let test = test_series(&runs)?;
        groups.push((name, train, test));
    }
    let mut written = Vec::new();
    for (name, train, test) in &groups {
        for (panel, s) in [("train", train), ("test", test)] {
            let p = out.join(format!("{name}_{panel}.svg"));
            render(&p, &format!("{name}: {panel} return"), &[(name.as_str(), s)])?;
            written.push(p);
        }
    }
    if groups.len() > 1 {
        for panel in ["train", "test"] {
            let curves: Vec<(&str, &Series)> = groups
                .iter()
                .map(|(n, tr, te)| (n.as_str(), if panel == "train" { tr } else { te }))
                .collect();
            let p = out.join(format!("{panel}.svg"));
            render(&p, &format!("{panel} return"), &curves)?;
            written.push(p);
        }
    }
    let rows: Vec<(&str, &str, &Series)> = groups
        .iter()
        .flat_map(|(n, tr, te)| [(n.as_str(), "train", tr), (n.as_str(), "test", te)])
        .collect();
    let csv_path = out.join("aggregate.csv");
    write_aggregate_csv(&csv_path, &rows)?;
    written.push(csv_path);
    Ok(written)
}
