//! Aggregate run records into return and smoothness tables (text and CSV)
//! and training-curve plots (SVG). Reports read records only; nothing is
//! retrained or re-evaluated.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use smoothrl_core::checkpoint::write_atomic;
use smoothrl_core::env::EnvKind;
use smoothrl_core::metrics::{mean_std, RunRecord};
use smoothrl_core::regularizers::METHOD_NAMES;

use crate::error::{BenchError, Result};
use crate::runner::{CURVES_DIR, RECORDS_DIR};

pub const REPORT_FORMAT_VERSION: u32 = 1;
pub const MISSING: &str = "—";

type Section<'a> = (&'a str, &'a BTreeMap<String, String>, fn(&Cell) -> String);

/// Mean and sample standard deviation over seeds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

impl Stat {
    pub fn of(xs: &[f64]) -> Self {
        let (mean, std) = mean_std(xs);
        Self { mean, std, n: xs.len() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub ret: Stat,
    pub sm: Stat,
    pub seeds: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportTable {
    pub envs: Vec<String>,
    pub methods: Vec<String>,
    /// Keyed by `(method, env)`.
    pub cells: BTreeMap<(String, String), Cell>,
    /// Per env, the method with the highest mean return.
    pub best_return: BTreeMap<String, String>,
    /// Per env, the method with the lowest mean Sm.
    pub best_sm: BTreeMap<String, String>,
}

fn method_rank(m: &str) -> (usize, String) {
    (METHOD_NAMES.iter().position(|n| *n == m).unwrap_or(METHOD_NAMES.len()), m.to_string())
}

fn env_rank(e: &str) -> (usize, String) {
    (EnvKind::ALL.iter().position(|k| k.name() == e).unwrap_or(EnvKind::ALL.len()), e.to_string())
}

/// Argmax (or argmin) of the mean, ties broken toward the lower std.
fn best<'a>(cells: impl Iterator<Item = (&'a str, Stat)>, higher_is_better: bool) -> Option<String> {
    let mut best: Option<(&str, Stat)> = None;
    for (m, s) in cells {
        if !s.mean.is_finite() {
            continue;
        }
        let better = match best {
            None => true,
            Some((_, b)) => {
                let key = if higher_is_better { s.mean > b.mean } else { s.mean < b.mean };
                key || (s.mean == b.mean && s.std < b.std)
            }
        };
        if better {
            best = Some((m, s));
        }
    }
    best.map(|(m, _)| m.to_string())
}

impl ReportTable {
    /// Build from records. `envs` and `methods` fix the layout; cells with no
    /// records stay empty and render as missing.
    pub fn build(records: &[RunRecord], envs: &[String], methods: &[String]) -> Self {
        let mut groups: BTreeMap<(String, String), Vec<&RunRecord>> = BTreeMap::new();
        for r in records {
            groups.entry((r.method.clone(), r.env.clone())).or_default().push(r);
        }
        let mut cells = BTreeMap::new();
        for (key, mut rs) in groups {
            rs.sort_by_key(|r| r.seed);
            let rets: Vec<f64> = rs.iter().map(|r| r.return_mean).collect();
            let sms: Vec<f64> = rs.iter().map(|r| r.sm_mean).collect();
            cells.insert(
                key,
                Cell { ret: Stat::of(&rets), sm: Stat::of(&sms), seeds: rs.iter().map(|r| r.seed).collect() },
            );
        }
        let mut best_return = BTreeMap::new();
        let mut best_sm = BTreeMap::new();
        for env in envs {
            let column =
                || methods.iter().filter_map(|m| cells.get(&(m.clone(), env.clone())).map(|c: &Cell| (m.as_str(), c)));
            if let Some(m) = best(column().map(|(m, c)| (m, c.ret)), true) {
                best_return.insert(env.clone(), m);
            }
            if let Some(m) = best(column().map(|(m, c)| (m, c.sm)), false) {
                best_sm.insert(env.clone(), m);
            }
        }
        Self { envs: envs.to_vec(), methods: methods.to_vec(), cells, best_return, best_sm }
    }

    /// Layout inferred from the records themselves, in canonical order.
    pub fn from_records(records: &[RunRecord]) -> Self {
        let mut envs: Vec<String> = records.iter().map(|r| r.env.clone()).collect();
        envs.sort_by_key(|e| env_rank(e));
        envs.dedup();
        let mut methods: Vec<String> = records.iter().map(|r| r.method.clone()).collect();
        methods.sort_by_key(|m| method_rank(m));
        methods.dedup();
        Self::build(records, &envs, &methods)
    }

    pub fn cell(&self, method: &str, env: &str) -> Option<&Cell> {
        self.cells.get(&(method.to_string(), env.to_string()))
    }

    pub fn missing_cells(&self) -> usize {
        self.methods.len() * self.envs.len()
            - self
                .methods
                .iter()
                .flat_map(|m| self.envs.iter().map(move |e| (m, e)))
                .filter(|(m, e)| self.cell(m, e).is_some())
                .count()
    }

    pub fn render_text(&self) -> String {
        let mut s = String::new();
        let sections: [Section; 2] = [
            ("Cumulative return (higher is better)", &self.best_return, |c| {
                format!("{:.2} ± {:.2}", c.ret.mean, c.ret.std)
            }),
            ("Smoothness Sm (lower is better)", &self.best_sm, |c| format!("{:.5} ± {:.5}", c.sm.mean, c.sm.std)),
        ];
        let name_w = self.methods.iter().map(|m| m.chars().count()).max().unwrap_or(6).max(6);
        for (i, (title, best, fmt)) in sections.into_iter().enumerate() {
            if i > 0 {
                s.push('\n');
            }
            let rows: Vec<Vec<String>> = self
                .methods
                .iter()
                .map(|m| {
                    self.envs
                        .iter()
                        .map(|e| match self.cell(m, e) {
                            None => MISSING.to_string(),
                            Some(c) => {
                                let mark = if best.get(e) == Some(m) { " *" } else { "" };
                                format!("{}{mark}", fmt(c))
                            }
                        })
                        .collect()
                })
                .collect();
            let widths: Vec<usize> = (0..self.envs.len())
                .map(|j| rows.iter().map(|r| r[j].chars().count()).chain([self.envs[j].len()]).max().unwrap_or(0))
                .collect();
            let _ = writeln!(s, "{title}");
            let mut header = format!("{:<name_w$}", "method");
            for (e, w) in self.envs.iter().zip(&widths) {
                let _ = write!(header, " | {e:<w$}");
            }
            let _ = writeln!(s, "{header}");
            let _ = writeln!(s, "{}", "-".repeat(header.chars().count()));
            for (m, row) in self.methods.iter().zip(&rows) {
                let mut line = format!("{m:<name_w$}");
                for (v, w) in row.iter().zip(&widths) {
                    let pad = w - v.chars().count();
                    let _ = write!(line, " | {v}{}", " ".repeat(pad));
                }
                let _ = writeln!(s, "{}", line.trim_end());
            }
        }
        s.push_str("\n* best in column; mean ± sample std over seeds\n");
        s
    }

    pub fn render_csv(&self) -> String {
        let mut s = format!("# format_version={REPORT_FORMAT_VERSION}\n");
        s.push_str("env,method,n_seeds,return_mean,return_std,sm_mean,sm_std,best_return,best_sm\n");
        for e in &self.envs {
            for m in &self.methods {
                match self.cell(m, e) {
                    None => {
                        let _ = writeln!(s, "{e},{m},0,{MISSING},{MISSING},{MISSING},{MISSING},false,false");
                    }
                    Some(c) => {
                        let _ = writeln!(
                            s,
                            "{e},{m},{},{:?},{:?},{:?},{:?},{},{}",
                            c.ret.n,
                            c.ret.mean,
                            c.ret.std,
                            c.sm.mean,
                            c.sm.std,
                            self.best_return.get(e) == Some(m),
                            self.best_sm.get(e) == Some(m)
                        );
                    }
                }
            }
        }
        s
    }
}

/// Records under `out/records`, sorted by file name. Unreadable files are
/// errors; a missing directory yields no records.
pub fn load_records(out: &Path) -> Result<Vec<RunRecord>> {
    let dir = out.join(RECORDS_DIR);
    let entries = match std::fs::read_dir(&dir) {
        Ok(e) => e,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(BenchError::io(&dir, e)),
    };
    let mut paths: Vec<_> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
        .collect();
    paths.sort();
    let mut out_records = Vec::new();
    for p in paths {
        let text = std::fs::read_to_string(&p).map_err(|e| BenchError::io(&p, e))?;
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let rec: RunRecord = serde_json::from_str(line)?;
            rec.validate()?;
            out_records.push(rec);
        }
    }
    Ok(out_records)
}

/// `(step, mean_episode_return)` pairs of a curve CSV.
pub fn read_curve(path: &Path) -> Result<Vec<(f64, f64)>> {
    let text = std::fs::read_to_string(path).map_err(|e| BenchError::io(path, e))?;
    let mut pts = Vec::new();
    for line in text.lines().skip(1) {
        let mut it = line.split(',');
        let (Some(s), Some(r)) = (it.next(), it.next()) else { continue };
        let (Ok(s), Ok(r)) = (s.parse::<f64>(), r.parse::<f64>()) else { continue };
        pts.push((s, r));
    }
    Ok(pts)
}

const SVG_W: f64 = 640.0;
const SVG_H: f64 = 400.0;
const MARGIN: f64 = 56.0;

/// Per-seed curves (thin) with their pointwise mean (thick).
pub fn render_curves_svg(title: &str, curves: &[Vec<(f64, f64)>]) -> String {
    let finite = curves.iter().flatten().filter(|(x, y)| x.is_finite() && y.is_finite());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in finite {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 == x0 {
        x1 = x0 + 1.0;
    }
    if y1 == y0 {
        y1 = y0 + 1.0;
    }
    let px = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (SVG_W - 2.0 * MARGIN);
    let py = |y: f64| SVG_H - MARGIN - (y - y0) / (y1 - y0) * (SVG_H - 2.0 * MARGIN);
    let path = |pts: &[(f64, f64)]| {
        pts.iter()
            .filter(|(x, y)| x.is_finite() && y.is_finite())
            .map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y)))
            .collect::<Vec<_>>()
            .join(" ")
    };

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SVG_W}" height="{SVG_H}" viewBox="0 0 {SVG_W} {SVG_H}">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="24" font-size="15" text-anchor="middle" font-family="sans-serif">{}</text>"#,
        SVG_W / 2.0,
        xml_escape(title)
    );
    let (l, r, t, b) = (MARGIN, SVG_W - MARGIN, MARGIN, SVG_H - MARGIN);
    let _ = writeln!(s, r#"<path d="M{l},{t} L{l},{b} L{r},{b}" stroke="black" fill="none"/>"#);
    for (v, y) in [(y0, b), (y1, t)] {
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{y}" font-size="11" text-anchor="end" font-family="sans-serif">{v:.1}</text>"#,
            l - 4.0
        );
    }
    for (v, x) in [(x0, l), (x1, r)] {
        let _ = writeln!(
            s,
            r#"<text x="{x}" y="{}" font-size="11" text-anchor="middle" font-family="sans-serif">{v:.0}</text>"#,
            b + 16.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" font-size="12" text-anchor="middle" font-family="sans-serif">step</text>"#,
        SVG_W / 2.0,
        SVG_H - 12.0
    );
    let _ = writeln!(
        s,
        r#"<text x="14" y="{}" font-size="12" text-anchor="middle" font-family="sans-serif" transform="rotate(-90 14 {})">mean episode return</text>"#,
        SVG_H / 2.0,
        SVG_H / 2.0
    );
    for c in curves {
        let _ = writeln!(
            s,
            r##"<polyline points="{}" fill="none" stroke="#7aa6d6" stroke-width="1" opacity="0.7"/>"##,
            path(c)
        );
    }
    let _ = writeln!(
        s,
        r##"<polyline points="{}" fill="none" stroke="#1f4e8c" stroke-width="2.5"/>"##,
        path(&mean_curve(curves))
    );
    s.push_str("</svg>\n");
    s
}

/// Pointwise mean over the curves that have a finite value at each index.
pub fn mean_curve(curves: &[Vec<(f64, f64)>]) -> Vec<(f64, f64)> {
    let len = curves.iter().map(Vec::len).max().unwrap_or(0);
    (0..len)
        .filter_map(|i| {
            let pts: Vec<(f64, f64)> =
                curves.iter().filter_map(|c| c.get(i)).copied().filter(|(_, y)| y.is_finite()).collect();
            (!pts.is_empty()).then(|| (pts[0].0, pts.iter().map(|p| p.1).sum::<f64>() / pts.len() as f64))
        })
        .collect()
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Paths of the files written by [`write_report`].
#[derive(Debug, Clone, PartialEq)]
pub struct ReportFiles {
    pub text: std::path::PathBuf,
    pub csv: std::path::PathBuf,
    pub plots: Vec<std::path::PathBuf>,
}

/// Render `report.txt`, `report.csv` and one curve plot per cell.
pub fn write_report(out: &Path, table: &ReportTable, records: &[RunRecord]) -> Result<ReportFiles> {
    let text_path = out.join("report.txt");
    let csv_path = out.join("report.csv");
    write_atomic(&text_path, table.render_text().as_bytes())?;
    write_atomic(&csv_path, table.render_csv().as_bytes())?;
    let mut plots = Vec::new();
    for (method, env) in table.cells.keys() {
        let mut rs: Vec<&RunRecord> = records.iter().filter(|r| &r.method == method && &r.env == env).collect();
        rs.sort_by_key(|r| r.seed);
        let curves = rs.iter().map(|r| read_curve(&out.join(&r.training_curve))).collect::<Result<Vec<_>>>()?;
        let svg = render_curves_svg(&format!("{env} / {method} ({} seeds)", rs.len()), &curves);
        let path = out.join(CURVES_DIR).join(format!("{env}__{method}.svg"));
        write_atomic(&path, svg.as_bytes())?;
        plots.push(path);
    }
    Ok(ReportFiles { text: text_path, csv: csv_path, plots })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(method: &str, env: &str, seed: u64, ret: f64, sm: f64) -> RunRecord {
        RunRecord {
            format_version: 1,
            method: method.into(),
            env: env.into(),
            seed,
            train_steps: 10,
            return_mean: ret,
            return_std: 0.0,
            sm_mean: sm,
            sm_std: 0.0,
            sm_per_dim: vec![sm],
            episodes: 1,
            training_curve: String::new(),
            checkpoint: String::new(),
            checkpoint_sha256: String::new(),
            config_hash: String::new(),
        }
    }

    #[test]
    fn single_record_has_zero_std() {
        let t = ReportTable::from_records(&[rec("vanilla", "pendulum", 0, -5.0, 0.1)]);
        let c = t.cell("vanilla", "pendulum").unwrap();
        assert_eq!((c.ret.mean, c.ret.std), (-5.0, 0.0));
    }

    #[test]
    fn sample_std_over_seeds() {
        let rs: Vec<_> =
            [1.0, 2.0, 3.0].iter().enumerate().map(|(i, &r)| rec("caps", "pendulum", i as u64, r, r)).collect();
        let t = ReportTable::from_records(&rs);
        let c = t.cell("caps", "pendulum").unwrap();
        assert_eq!((c.ret.mean, c.ret.std, c.ret.n), (2.0, 1.0, 3));
    }

    #[test]
    fn best_markers() {
        let rs = vec![
            rec("vanilla", "pendulum", 0, -10.0, 0.5),
            rec("caps", "pendulum", 0, -5.0, 0.3),
            rec("l2c2", "pendulum", 0, -7.0, 0.2),
        ];
        let t = ReportTable::from_records(&rs);
        assert_eq!(t.best_return["pendulum"], "caps");
        assert_eq!(t.best_sm["pendulum"], "l2c2");
        assert_eq!(t.methods, ["vanilla", "caps", "l2c2"]);
        let text = t.render_text();
        assert!(text.contains("-5.00 ± 0.00 *"));
        assert!(text.contains("0.20000 ± 0.00000 *"));
    }

    #[test]
    fn ties_prefer_lower_std() {
        let rs = vec![
            rec("caps", "pendulum", 0, 1.0, 0.5),
            rec("caps", "pendulum", 1, 3.0, 0.5),
            rec("l2c2", "pendulum", 0, 2.0, 0.5),
            rec("l2c2", "pendulum", 1, 2.0, 0.5),
        ];
        assert_eq!(ReportTable::from_records(&rs).best_return["pendulum"], "l2c2");
    }

    #[test]
    fn missing_cells_render_as_dash() {
        let rs = vec![rec("vanilla", "pendulum", 0, -1.0, 0.1)];
        let t = ReportTable::build(&rs, &["pendulum".into(), "reacher".into()], &["vanilla".into(), "caps".into()]);
        assert_eq!(t.missing_cells(), 3);
        assert_eq!(t.render_text().matches(MISSING).count(), 6);
        assert!(t.render_csv().contains("reacher,caps,0,—"));
    }

    #[test]
    fn svg_is_well_formed() {
        let curves = vec![vec![(0.0, -10.0), (1.0, -5.0)], vec![(0.0, f64::NAN), (1.0, -3.0)]];
        let svg = render_curves_svg("a <b>", &curves);
        assert!(svg.starts_with("<svg") && svg.ends_with("</svg>\n"));
        assert_eq!(svg.matches("<polyline").count(), 3);
        assert!(svg.contains("a &lt;b&gt;"));
        assert_eq!(mean_curve(&curves), vec![(0.0, -10.0), (1.0, -4.0)]);
    }
}
