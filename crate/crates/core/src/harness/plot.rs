//! Learning-curve and trajectory plots as plain SVG, plus the CSV behind them.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::eval::EpisodeRecord;
use super::metrics::{mean_ci95, moving_average, read_metrics, resample, write_text};
use super::{HarnessError, Manifest};
use crate::env::EnvConfig;

/// Smoothing window of the plotted curves.
pub const SMOOTHING_WINDOW: usize = 5;

const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

/// Mean ± 95% CI across seeds for one (environment, agent) group.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveGroup {
    pub env: String,
    pub label: String,
    pub seeds: usize,
    pub steps: Vec<usize>,
    /// True where every seed had an evaluation at exactly this step.
    pub exact: Vec<bool>,
    pub success: Vec<Option<(f64, f64)>>,
    pub time_to_goal: Vec<Option<(f64, f64)>>,
}

impl CurveGroup {
    pub fn final_success(&self) -> Option<(f64, f64)> {
        self.success.iter().rev().flatten().next().copied()
    }
}

/// `(env_step, success, time_to_goal)` of one seed.
type Series = Vec<(usize, Option<f64>, Option<f64>)>;

#[derive(Debug, Clone, PartialEq)]
pub struct PlotSummary {
    pub files: Vec<PathBuf>,
    pub groups: Vec<CurveGroup>,
}

/// Reads every run directory (each holding `manifest.json` and
/// `metrics.csv`), groups seeds by environment and agent, and writes
/// `curves_<env>.csv`, `success_<env>.svg` and `time_<env>.svg` into `out`.
pub fn emit_plots(run_dirs: &[PathBuf], out: &Path) -> Result<PlotSummary, HarnessError> {
    if run_dirs.is_empty() {
        return Err(HarnessError::Config("no run directories given".into()));
    }
    // env -> label -> one series per seed
    let mut by_env: BTreeMap<String, BTreeMap<String, Vec<Series>>> = BTreeMap::new();
    for dir in run_dirs {
        let mpath = dir.join("manifest.json");
        let text = std::fs::read_to_string(&mpath).map_err(|e| HarnessError::Config(format!("{}: {e}", mpath.display())))?;
        let manifest: Manifest =
            serde_json::from_str(&text).map_err(|e| HarnessError::Config(format!("{}: {e}", mpath.display())))?;
        let metrics = read_metrics(&dir.join("metrics.csv"))?;
        let series = metrics
            .rows
            .iter()
            .map(|r| (r.env_step, Some(r.mean_success), r.mean_time_to_goal))
            .collect();
        by_env
            .entry(manifest.env.to_string())
            .or_default()
            .entry(manifest.label())
            .or_default()
            .push(series);
    }
    std::fs::create_dir_all(out).map_err(|e| HarnessError::io(out, e))?;
    let mut files = Vec::new();
    let mut groups = Vec::new();
    for (env, labels) in &by_env {
        let mut grid: Vec<usize> = labels
            .values()
            .flatten()
            .flat_map(|s| s.iter().map(|p| p.0))
            .collect();
        grid.sort_unstable();
        grid.dedup();
        let mut env_groups = Vec::new();
        for (label, seeds) in labels {
            env_groups.push(curve_group(env, label, seeds, &grid));
        }
        let csv_path = out.join(format!("curves_{env}.csv"));
        write_text(&csv_path, &curves_csv(&env_groups))?;
        files.push(csv_path);
        let succ = out.join(format!("success_{env}.svg"));
        write_text(&succ, &curve_svg(&env_groups, &format!("{env}: evaluation success"), "success rate", |g| &g.success, Some(1.0)))?;
        files.push(succ);
        let time = out.join(format!("time_{env}.svg"));
        write_text(&time, &curve_svg(&env_groups, &format!("{env}: time to goal (successful episodes)"), "steps", |g| &g.time_to_goal, None))?;
        files.push(time);
        groups.extend(env_groups);
    }
    Ok(PlotSummary { files, groups })
}

fn curve_group(env: &str, label: &str, seeds: &[Series], grid: &[usize]) -> CurveGroup {
    let mut exact = vec![true; grid.len()];
    let mut succ_curves = Vec::new();
    let mut time_curves = Vec::new();
    for s in seeds {
        let succ: Vec<(usize, Option<f64>)> = s.iter().map(|p| (p.0, p.1)).collect();
        let time: Vec<(usize, Option<f64>)> = s.iter().map(|p| (p.0, p.2)).collect();
        let rs = resample(&succ, grid);
        for (e, x) in exact.iter_mut().zip(&rs.exact) {
            *e &= *x;
        }
        succ_curves.push(moving_average(&rs.values, SMOOTHING_WINDOW));
        time_curves.push(moving_average(&resample(&time, grid).values, SMOOTHING_WINDOW));
    }
    CurveGroup {
        env: env.to_string(),
        label: label.to_string(),
        seeds: seeds.len(),
        steps: grid.to_vec(),
        exact,
        success: mean_ci95(&succ_curves),
        time_to_goal: mean_ci95(&time_curves),
    }
}

fn curves_csv(groups: &[CurveGroup]) -> String {
    let mut s = String::from("label,env_step,exact,seeds,success_mean,success_ci95,time_mean,time_ci95\n");
    let f = |v: Option<(f64, f64)>| match v {
        Some((m, h)) => (m.to_string(), h.to_string()),
        None => (String::new(), String::new()),
    };
    for g in groups {
        for i in 0..g.steps.len() {
            let (sm, sh) = f(g.success[i]);
            let (tm, th) = f(g.time_to_goal[i]);
            let _ = writeln!(
                s,
                "{},{},{},{},{sm},{sh},{tm},{th}",
                g.label,
                g.steps[i],
                u8::from(g.exact[i]),
                g.seeds
            );
        }
    }
    s
}

fn curve_svg(
    groups: &[CurveGroup],
    title: &str,
    y_label: &str,
    pick: impl Fn(&CurveGroup) -> &Vec<Option<(f64, f64)>>,
    y_max_fixed: Option<f64>,
) -> String {
    let (w, h) = (720.0, 440.0);
    let (ml, mr, mt, mb) = (70.0, 190.0, 40.0, 50.0);
    let x_max = groups
        .iter()
        .flat_map(|g| g.steps.iter())
        .copied()
        .max()
        .unwrap_or(1)
        .max(1) as f64;
    let y_max = y_max_fixed.unwrap_or_else(|| {
        groups
            .iter()
            .flat_map(|g| pick(g).iter().flatten().map(|(m, c)| m + c))
            .fold(1.0, f64::max)
            * 1.05
    });
    let px = |x: f64| ml + x / x_max * (w - ml - mr);
    let py = |y: f64| h - mb - y / y_max * (h - mt - mb);
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="22" font-size="15">{}</text>"#, ml, xml_escape(title));
    // axes and ticks
    let _ = writeln!(
        s,
        r#"<path d="M{ml},{} L{ml},{} L{},{}" stroke="black" fill="none"/>"#,
        mt,
        h - mb,
        w - mr,
        h - mb
    );
    for k in 0..=5 {
        let yv = y_max * k as f64 / 5.0;
        let xv = x_max * k as f64 / 5.0;
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#, ml - 6.0, py(yv) + 4.0, tick(yv));
        let _ = writeln!(s, r##"<line x1="{ml}" x2="{}" y1="{}" y2="{}" stroke="#ddd"/>"##, w - mr, py(yv), py(yv));
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, px(xv), h - mb + 18.0, tick(xv));
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">environment steps</text>"#, px(x_max / 2.0), h - 10.0);
    let _ = writeln!(
        s,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
        py(y_max / 2.0),
        py(y_max / 2.0),
        y_label
    );
    for (i, g) in groups.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let dash = if g.label.contains('(') { r#" stroke-dasharray="6 4""# } else { "" };
        let pts: Vec<(f64, f64, f64)> = g
            .steps
            .iter()
            .zip(pick(g))
            .filter_map(|(x, v)| v.map(|(m, c)| (*x as f64, m, c)))
            .collect();
        if !pts.is_empty() {
            let mut band = String::new();
            for (x, m, c) in &pts {
                let _ = write!(band, "{:.2},{:.2} ", px(*x), py((m + c).min(y_max)));
            }
            for (x, m, c) in pts.iter().rev() {
                let _ = write!(band, "{:.2},{:.2} ", px(*x), py((m - c).max(0.0)));
            }
            let _ = writeln!(s, r#"<polygon points="{}" fill="{color}" fill-opacity="0.18" stroke="none"/>"#, band.trim_end());
            let line: Vec<String> = pts.iter().map(|(x, m, _)| format!("{:.2},{:.2}", px(*x), py(*m))).collect();
            let _ = writeln!(
                s,
                r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"{dash}/>"#,
                line.join(" ")
            );
            // resampled (carried-forward) grid points get hollow markers
            for ((x, v), e) in g.steps.iter().zip(pick(g)).zip(&g.exact) {
                if let (Some((m, _)), false) = (v, e) {
                    let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="white" stroke="{color}"/>"#, px(*x as f64), py(*m));
                }
            }
        }
        let ly = mt + 18.0 * i as f64 + 10.0;
        let _ = writeln!(s, r#"<line x1="{}" x2="{}" y1="{ly}" y2="{ly}" stroke="{color}" stroke-width="3"{dash}/>"#, w - mr + 12.0, w - mr + 36.0);
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}">{} (n={})</text>"#,
            w - mr + 42.0,
            ly + 4.0,
            xml_escape(&g.label),
            g.seeds
        );
    }
    s.push_str("</svg>\n");
    s
}

fn tick(v: f64) -> String {
    if v >= 1000.0 {
        format!("{}k", (v / 1000.0 * 10.0).round() / 10.0)
    } else if v.fract() == 0.0 {
        format!("{v}")
    } else {
        format!("{v:.2}")
    }
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Top-down maze drawing with the goal graph and evaluation trajectories;
/// `None` for environments without a maze.
pub fn trajectory_svg(cfg: &EnvConfig, episodes: &[EpisodeRecord]) -> Option<String> {
    let geom = cfg.geometry.as_ref()?;
    let scale = 48.0;
    let (xw, yh) = geom.extent();
    let (w, h) = (xw * scale, yh * scale);
    let tx = |x: f64| x * scale;
    let ty = |y: f64| h - y * scale;
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}">"#);
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let cs = geom.cell_size();
    for row in 0..geom.height() {
        for col in 0..geom.width() {
            if geom.is_wall_cell(col, row) {
                let (x0, y0) = geom.cell_origin(col, row);
                let _ = writeln!(
                    s,
                    r##"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="#444"/>"##,
                    tx(x0),
                    ty(y0 + cs),
                    cs * scale,
                    cs * scale
                );
            }
        }
    }
    for &(a, b) in cfg.graph.edges() {
        let (pa, pb) = (cfg.graph.node(a), cfg.graph.node(b));
        let _ = writeln!(
            s,
            r##"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="#bbb" stroke-width="1"/>"##,
            tx(pa.as_slice()[0]),
            ty(pa.as_slice()[1]),
            tx(pb.as_slice()[0]),
            ty(pb.as_slice()[1])
        );
    }
    for (i, ep) in episodes.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> = ep
            .positions
            .iter()
            .map(|p| format!("{:.2},{:.2}", tx(p[0]), ty(p[1])))
            .collect();
        let dash = if ep.success { "" } else { r#" stroke-dasharray="4 3""# };
        let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"{dash}/>"#, pts.join(" "));
        let _ = writeln!(
            s,
            r#"<circle cx="{:.2}" cy="{:.2}" r="{:.2}" fill="{color}" fill-opacity="0.25" stroke="{color}"/>"#,
            tx(ep.goal[0]),
            ty(ep.goal[1]),
            cfg.goal_spec.threshold * scale
        );
    }
    let start = cfg.eval_start.achieved_goal();
    let _ = writeln!(
        s,
        r#"<circle cx="{:.2}" cy="{:.2}" r="5" fill="black"/>"#,
        tx(start.as_slice()[0]),
        ty(start.as_slice()[1])
    );
    s.push_str("</svg>\n");
    Some(s)
}
