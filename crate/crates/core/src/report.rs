//! CSV tables and SVG scatter plots. Every writer renders to memory and
//! moves the finished file into place, so a failure never leaves a partial file.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::guidance::{Method, MissionResult};
use crate::monte_carlo::{MethodSummary, MonteCarloRecord};
use crate::trajectory::Trajectory;

pub const RECORDS_HEADER: &str = "run,alpha_tilde,method,epsilon,status,iterations";
pub const GRID_POINTS: usize = 501;

/// 17 significant digits: parses back to the identical `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes `contents` to a temporary file next to `path`, then renames it.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(contents).map_err(|e| Error::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

pub fn records_csv(records: &[MonteCarloRecord]) -> String {
    let mut out = String::from(RECORDS_HEADER);
    out.push('\n');
    for r in records {
        let eps = r.epsilon.map(fmt_f64).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.run,
            fmt_f64(r.alpha_tilde),
            r.method,
            eps,
            r.status,
            r.iterations
        );
    }
    out
}

pub fn write_records_csv(records: &[MonteCarloRecord], path: &Path) -> Result<()> {
    if records.is_empty() {
        return Err(Error::InvalidArgument("no records to write".into()));
    }
    write_atomic(path, records_csv(records).as_bytes())
}

pub fn summary_csv(summary: &[MethodSummary]) -> String {
    let mut out = String::from("method,ok,failures,mean,median,std,max_abs\n");
    for s in summary {
        let stats = match s.stats {
            Some(st) => [st.mean, st.median, st.std, st.max_abs]
                .map(fmt_f64)
                .join(","),
            None => ",,,".to_string(),
        };
        let _ = writeln!(out, "{},{},{},{}", s.method, s.ok, s.failures, stats);
    }
    out
}

pub fn write_summary(summary: &[MethodSummary], path: &Path) -> Result<()> {
    write_atomic(path, summary_csv(summary).as_bytes())
}

const SVG_W: f64 = 640.0;
const SVG_H: f64 = 420.0;
const LEFT: f64 = 90.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 50.0;

/// Vertical pixel coordinate of `eps` for a symmetric axis of half-range `half`.
pub fn svg_y(eps: f64, half: f64) -> f64 {
    let mid = TOP + 0.5 * (SVG_H - TOP - BOTTOM);
    mid - eps / half * 0.5 * (SVG_H - TOP - BOTTOM)
}

/// Scatter of epsilon per method: one circle per successful record, a
/// dashed zero line, and a symmetric vertical axis.
pub fn scatter_svg(records: &[MonteCarloRecord]) -> String {
    let mut methods: Vec<Method> = records.iter().map(|r| r.method).collect();
    methods.sort();
    methods.dedup();
    let max_abs = records
        .iter()
        .filter_map(|r| r.epsilon)
        .fold(0.0_f64, |a, e| a.max(e.abs()));
    let half = if max_abs > 0.0 { 1.1 * max_abs } else { 1.0 };
    let plot_w = SVG_W - LEFT - RIGHT;
    let slot = plot_w / methods.len().max(1) as f64;
    let zero = svg_y(0.0, half);

    let mut s = String::new();
    let _ = writeln!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{SVG_W}\" height=\"{SVG_H}\" viewBox=\"0 0 {SVG_W} {SVG_H}\">"
    );
    let _ = writeln!(
        s,
        "<rect width=\"{SVG_W}\" height=\"{SVG_H}\" fill=\"white\"/>"
    );
    let _ = writeln!(
        s,
        "<line class=\"axis\" x1=\"{LEFT}\" y1=\"{TOP}\" x2=\"{LEFT}\" y2=\"{:.3}\" stroke=\"black\"/>",
        SVG_H - BOTTOM
    );
    let _ = writeln!(
        s,
        "<line class=\"axis\" x1=\"{LEFT}\" y1=\"{:.3}\" x2=\"{:.3}\" y2=\"{:.3}\" stroke=\"black\"/>",
        SVG_H - BOTTOM,
        SVG_W - RIGHT,
        SVG_H - BOTTOM
    );
    let _ = writeln!(
        s,
        "<line class=\"zero\" x1=\"{LEFT}\" y1=\"{zero:.3}\" x2=\"{:.3}\" y2=\"{zero:.3}\" stroke=\"gray\" stroke-dasharray=\"4 3\"/>",
        SVG_W - RIGHT
    );
    for v in [-half, 0.0, half] {
        let _ = writeln!(
            s,
            "<text class=\"tick\" x=\"{:.3}\" y=\"{:.3}\" font-size=\"11\" text-anchor=\"end\">{v:.3e}</text>",
            LEFT - 6.0,
            svg_y(v, half) + 4.0
        );
    }
    let _ = writeln!(
        s,
        "<text x=\"18\" y=\"{:.3}\" font-size=\"13\" transform=\"rotate(-90 18 {:.3})\" text-anchor=\"middle\">final state error</text>",
        0.5 * SVG_H,
        0.5 * SVG_H
    );
    let runs = records.iter().map(|r| r.run).max().map_or(1, |m| m + 1);
    for (i, m) in methods.iter().enumerate() {
        let cx = LEFT + (i as f64 + 0.5) * slot;
        let _ = writeln!(
            s,
            "<text class=\"category\" x=\"{cx:.3}\" y=\"{:.3}\" font-size=\"13\" text-anchor=\"middle\">{m}</text>",
            SVG_H - BOTTOM + 22.0
        );
        for r in records.iter().filter(|r| r.method == *m) {
            let Some(eps) = r.epsilon else { continue };
            let spread = 0.5 * slot * ((r.run as f64 + 0.5) / runs as f64 - 0.5);
            let _ = writeln!(
                s,
                "<circle class=\"marker\" data-method=\"{m}\" cx=\"{:.3}\" cy=\"{:.3}\" r=\"3\" fill=\"none\" stroke=\"steelblue\"/>",
                cx + spread,
                svg_y(eps, half)
            );
        }
    }
    s.push_str("</svg>\n");
    s
}

pub fn emit_scatter_svg(records: &[MonteCarloRecord], path: &Path) -> Result<()> {
    if records.is_empty() {
        return Err(Error::InvalidArgument("no records to plot".into()));
    }
    write_atomic(path, scatter_svg(records).as_bytes())
}

fn push_row(out: &mut String, source: &str, t: f64, cols: &[&[f64]]) {
    out.push_str(source);
    out.push(',');
    out.push_str(&fmt_f64(t));
    for v in cols.iter().flat_map(|c| c.iter()) {
        out.push(',');
        out.push_str(&fmt_f64(*v));
    }
    out.push('\n');
}

/// Solved trajectory as CSV: the raw support points (`source = node`)
/// followed by a uniform 501-point grid of the interpolants (`source = grid`).
pub fn trajectory_csv(traj: &Trajectory) -> Result<String> {
    let n = traj.n_base_states();
    let nu = traj.n_controls();
    let m = traj.n_params();
    let mut out = String::from("source,t");
    for i in 0..n {
        let _ = write!(out, ",x{}", i + 1);
    }
    for i in 0..nu {
        let _ = write!(out, ",u{}", i + 1);
    }
    for j in 0..m {
        for i in 0..n {
            let _ = write!(out, ",s{}_{}", i + 1, j + 1);
        }
    }
    out.push('\n');
    let row = |out: &mut String, source: &str, t: f64| -> Result<()> {
        let xa = traj.augmented_state_at(t)?;
        let u = traj.control_at(t)?;
        push_row(out, source, t, &[xa.as_slice(), u.as_slice()]);
        Ok(())
    };
    for &t in &traj.samples().state_times {
        row(&mut out, "node", t)?;
    }
    let (t0, tf) = traj.time_span();
    for i in 0..GRID_POINTS {
        let t = if i == GRID_POINTS - 1 {
            tf
        } else {
            t0 + (tf - t0) * i as f64 / (GRID_POINTS - 1) as f64
        };
        row(&mut out, "grid", t)?;
    }
    Ok(out)
}

pub fn write_trajectory_csv(traj: &Trajectory, path: &Path) -> Result<()> {
    write_atomic(path, trajectory_csv(traj)?.as_bytes())
}

/// Stitched closed-loop truth history.
pub fn mission_csv(result: &MissionResult) -> String {
    let n = result.final_state.len();
    let nu = result.controls.first().map_or(0, |u| u.len());
    let mut out = String::from("source,t");
    for i in 0..n {
        let _ = write!(out, ",x{}", i + 1);
    }
    for i in 0..nu {
        let _ = write!(out, ",u{}", i + 1);
    }
    out.push('\n');
    let tag = result.method.as_str().to_ascii_lowercase();
    for ((t, x), u) in result
        .times
        .iter()
        .zip(&result.states)
        .zip(&result.controls)
    {
        push_row(&mut out, &tag, *t, &[x.as_slice(), u.as_slice()]);
    }
    out
}

pub fn write_mission_csv(result: &MissionResult, path: &Path) -> Result<()> {
    write_atomic(path, mission_csv(result).as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::monte_carlo::RunStatus;

    fn rec(run: usize, method: Method, eps: f64) -> MonteCarloRecord {
        MonteCarloRecord {
            run,
            alpha_tilde: 2.0 + 1e-3 * run as f64,
            method,
            epsilon: Some(eps),
            iterations: 3,
            status: RunStatus::Ok,
        }
    }

    #[test]
    fn float_format_round_trips() {
        for v in [
            0.1,
            -1.0 / 3.0,
            1e-300,
            2.0178,
            f64::MIN_POSITIVE,
            123_456_789.123_456_78,
        ] {
            assert_eq!(fmt_f64(v).parse::<f64>().unwrap(), v);
        }
    }

    #[test]
    fn one_record_two_lines() {
        let csv = records_csv(&[rec(0, Method::Oc, 0.25)]);
        let lines: Vec<_> = csv.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0], RECORDS_HEADER);
        assert!(lines[1].starts_with("0,2.0000000000000000e0,OC,2.5000000000000000e-1,ok,3"));
    }

    #[test]
    fn failed_record_has_empty_epsilon() {
        let mut r = rec(1, Method::Dog, 0.0);
        r.epsilon = None;
        r.status = RunStatus::SolverFailure;
        let csv = records_csv(&[r]);
        assert!(csv
            .lines()
            .nth(1)
            .unwrap()
            .contains(",DOG,,solver-failure,"));
    }

    #[test]
    fn scatter_counts_markers() {
        let recs: Vec<_> = (0..10)
            .flat_map(|run| Method::ALL.map(|m| rec(run, m, 0.01 * run as f64 - 0.05)))
            .collect();
        let svg = scatter_svg(&recs);
        assert_eq!(svg.matches("class=\"marker\"").count(), 40);
        assert_eq!(svg.matches("class=\"zero\"").count(), 1);
        assert_eq!(svg.matches("class=\"axis\"").count(), 2);
        assert_eq!(svg, scatter_svg(&recs));
    }

    #[test]
    fn zero_epsilon_sits_on_zero_line() {
        let recs: Vec<_> = (0..3).map(|run| rec(run, Method::Og, 0.0)).collect();
        let svg = scatter_svg(&recs);
        let zero = format!("cy=\"{:.3}\"", svg_y(0.0, 1.0));
        assert_eq!(svg.matches(&zero).count(), 3);
    }

    #[test]
    fn atomic_write_replaces_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("sub/a.csv");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), b"two");
        assert_eq!(std::fs::read_dir(p.parent().unwrap()).unwrap().count(), 1);
    }
}
