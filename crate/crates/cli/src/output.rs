//! File emission: node tables, JSON reports and the convergence log. Every
//! file is written to a temporary sibling and renamed into place.

use std::fmt::Write as _;
use std::io;
use std::path::Path;

use plateau_core::desitter::DeSitterPoint;
use plateau_core::solver::StageRecord;
use plateau_core::verifier::SolutionAnalysis;
use plateau_core::{GridFunction, GridTopology, ScoreEntry, Scorecard};
use serde::{Deserialize, Serialize};

pub fn write_atomic(path: &Path, contents: &[u8]) -> io::Result<()> {
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = path.with_file_name(format!(".{name}.tmp"));
    std::fs::write(&tmp, contents)?;
    std::fs::rename(&tmp, path)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> io::Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(io::Error::other)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

fn row(out: &mut String, values: impl IntoIterator<Item = f64>) {
    let mut first = true;
    for v in values {
        if !first {
            out.push(',');
        }
        first = false;
        // shortest decimal that parses back to the same bits, with an exponent
        // for very small or large magnitudes
        let _ = write!(out, "{v:?}");
    }
    out.push('\n');
}

fn indexed(prefix: &str, n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("{prefix}{i}")).collect()
}

/// `r,phi,x1,x2,u,du1,du2,kappa1,kappa2,nu,eta` on polar grids,
/// `x1,u,du1,kappa1,nu,eta` on intervals; one row per node, interior and
/// boundary alike, in grid order.
pub fn solution_header(n: usize) -> Vec<String> {
    let mut h = Vec::new();
    if n > 1 {
        h.extend(["r".to_string(), "phi".to_string()]);
    }
    h.extend(indexed("x", n));
    h.push("u".into());
    h.extend(indexed("du", n));
    h.extend(indexed("kappa", n));
    h.extend(["nu".to_string(), "eta".to_string()]);
    h
}

pub fn solution_csv(a: &SolutionAnalysis) -> String {
    let n = a.grid.dim();
    let mut out = solution_header(n).join(",");
    out.push('\n');
    for (p, g) in a.geometry.iter().enumerate() {
        let mut v = Vec::new();
        if n > 1 {
            let (r, phi) = a.grid.coordinates(p);
            v.extend([r, phi]);
        }
        v.extend(g.x.iter().copied());
        v.push(g.u);
        v.extend(g.du.iter().copied());
        v.extend(g.kappa.iter().copied());
        v.extend([g.nu, g.eta(a.sigma)]);
        row(&mut out, v);
    }
    out
}

/// `y1..,v,dv1..,w_s,kstar1..,p,q`.
pub fn desitter_csv(n: usize, cloud: &[DeSitterPoint], curvatures: &[Vec<f64>]) -> String {
    let mut h = indexed("y", n);
    h.push("v".into());
    h.extend(indexed("dv", n));
    h.push("w_s".into());
    h.extend(indexed("kstar", n));
    h.extend(["p".to_string(), "q".to_string()]);
    let mut out = h.join(",");
    out.push('\n');
    for (c, k) in cloud.iter().zip(curvatures) {
        let mut v: Vec<f64> = c.y.iter().copied().collect();
        v.push(c.v);
        v.extend(c.grad_v.iter().copied());
        v.push(c.w_s);
        v.extend(k.iter().copied());
        v.extend([c.p, c.q]);
        row(&mut out, v);
    }
    out
}

/// Reads the `u` column of a node table written by [`solution_csv`] and
/// checks that its positions are the nodes of `grid`.
pub fn read_solution(text: &str, grid: &GridTopology) -> Result<GridFunction, String> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header: Vec<&str> = lines.next().ok_or("empty solution file")?.split(',').map(str::trim).collect();
    let want = solution_header(grid.dim());
    if header != want {
        return Err(format!("unexpected header `{}` (expected `{}`)", header.join(","), want.join(",")));
    }
    let col = |name: &str| header.iter().position(|h| *h == name).expect("header checked");
    let (iu, ix) = (col("u"), col("x1"));
    let mut values = Vec::with_capacity(grid.len());
    for (p, line) in lines.enumerate() {
        let fields: Vec<f64> = line
            .split(',')
            .map(|s| s.trim().parse::<f64>().map_err(|_| format!("row {}: `{s}` is not a number", p + 2)))
            .collect::<Result<_, _>>()?;
        if fields.len() != header.len() {
            return Err(format!("row {}: {} fields, expected {}", p + 2, fields.len(), header.len()));
        }
        if p >= grid.len() {
            return Err(format!("more rows than the {} grid nodes", grid.len()));
        }
        let x = grid.position(p);
        if x.iter().zip(&fields[ix..ix + grid.dim()]).any(|(a, b)| (a - b).abs() > 1e-12 * (1.0 + a.abs())) {
            return Err(format!("row {}: node position does not match the configured grid", p + 2));
        }
        values.push(fields[iu]);
    }
    if values.len() != grid.len() {
        return Err(format!("{} rows, expected {} grid nodes", values.len(), grid.len()));
    }
    let boundary = grid.boundary_nodes().first().map(|&p| values[p]).ok_or("grid has no boundary nodes")?;
    Ok(GridFunction::with_boundary(grid, values, boundary))
}

/// One line per Newton stage.
pub fn convergence_log(stages: &[StageRecord]) -> String {
    let mut out = String::new();
    for (i, s) in stages.iter().enumerate() {
        let res: Vec<String> = s.residuals.iter().map(|r| format!("{r:.3e}")).collect();
        let _ = writeln!(
            out,
            "stage {i} ladder={} t={} sigma_t={} theta={} eps={} iterations={} halvings={} bisected={} kappa=[{:.6},{:.6}] residuals={}",
            serde_json::to_value(s.ladder).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default(),
            s.t,
            s.sigma_t,
            s.theta,
            s.eps,
            s.iterations,
            s.halvings,
            s.bisected,
            s.kappa_min,
            s.kappa_max,
            res.join(",")
        );
    }
    out
}

/// Scorecard as written to `scorecard.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScorecardFile {
    pub passed: bool,
    pub failures: Vec<String>,
    pub entries: Vec<ScoreEntry>,
}

impl From<&Scorecard> for ScorecardFile {
    fn from(card: &Scorecard) -> Self {
        Self {
            passed: card.passed(),
            failures: card.failures().iter().map(|e| e.check_id.clone()).collect(),
            entries: card.entries.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use plateau_core::{build_grid, Cap, Domain};

    #[test]
    fn node_table_round_trips() {
        let d = Domain::disk(0.75f64.sqrt(), 8, 16).unwrap();
        let grid = build_grid(&d).unwrap();
        let cap = Cap::matched(0.5, 0.75f64.sqrt(), 0.05);
        let u = GridFunction::with_boundary(&grid, grid.positions().iter().map(|x| cap.u(x)).collect(), 0.05);
        let a = SolutionAnalysis::new(&d, &plateau_core::CurvatureSpec::mean(2), 0.5, &u).unwrap();
        let text = solution_csv(&a);
        assert_eq!(text.lines().count(), grid.len() + 1);
        assert!(text.starts_with("r,phi,x1,x2,u,du1,du2,kappa1,kappa2,nu,eta\n"));
        let back = read_solution(&text, &grid).unwrap();
        assert_eq!(back, u);
        let other = build_grid(&Domain::disk(1.0, 8, 16).unwrap()).unwrap();
        assert!(read_solution(&text, &other).unwrap_err().contains("position"));
        let short: String = text.lines().take(10).map(|l| format!("{l}\n")).collect();
        assert!(read_solution(&short, &grid).is_err());
    }

    #[test]
    fn interval_header() {
        assert_eq!(solution_header(1).join(","), "x1,u,du1,kappa1,nu,eta");
    }

    #[test]
    fn atomic_write_replaces() {
        let dir = std::env::temp_dir().join(format!("plateau-out-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let p = dir.join("a.txt");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "two");
        assert_eq!(std::fs::read_dir(&dir).unwrap().count(), 1);
        std::fs::remove_dir_all(&dir).ok();
    }
}
