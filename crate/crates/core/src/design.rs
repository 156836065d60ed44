//! Experiment design: Latin hypercube sampling, the synthetic training set
//! for the surrogate, and the choice of experimental points.

use std::path::Path;

use log::warn;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{read_json, write_json};
use crate::error::{Error, Result};
use crate::model::{CalibrationParameters, ForwardModel};

/// `n` points in `[0, 1)^d` with exactly one point in each of the `n` equal
/// bins of every axis.
pub fn latin_hypercube(n: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pts = vec![vec![0.0; d]; n];
    let mut perm: Vec<usize> = (0..n).collect();
    for k in 0..d {
        perm.shuffle(&mut rng);
        for (i, p) in pts.iter_mut().enumerate() {
            // keep strictly inside the bin so n = 1 lands in the open interval
            let jitter: f64 = loop {
                let r: f64 = rng.random();
                if r > 0.0 {
                    break r;
                }
            };
            p[k] = (perm[i] as f64 + jitter) / n as f64;
        }
    }
    pts
}

/// Axis-aligned box of θ multipliers (ratios to the reference values).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Default for DesignBox {
    fn default() -> Self {
        Self::uniform(4, 0.1, 6.0)
    }
}

impl DesignBox {
    pub fn uniform(d: usize, lo: f64, hi: f64) -> Self {
        Self {
            lower: vec![lo; d],
            upper: vec![hi; d],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.lower.len() != self.upper.len() || self.lower.is_empty() {
            return Err(Error::invalid("design box bounds must be nonempty and of equal length"));
        }
        for (k, (lo, hi)) in self.lower.iter().zip(&self.upper).enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::invalid(format!(
                    "design box axis {k}: need lower < upper, got [{lo}, {hi}]"
                )));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        p.len() == self.dim()
            && p.iter()
                .enumerate()
                .all(|(k, v)| *v >= self.lower[k] && *v <= self.upper[k])
    }

    /// Maps a point of the unit cube into the box.
    pub fn from_unit(&self, u: &[f64]) -> Vec<f64> {
        u.iter()
            .enumerate()
            .map(|(k, t)| self.lower[k] + t * (self.upper[k] - self.lower[k]))
            .collect()
    }

    pub fn center(&self) -> Vec<f64> {
        self.from_unit(&vec![0.5; self.dim()])
    }

    pub fn volume(&self) -> f64 {
        self.lower.iter().zip(&self.upper).map(|(l, u)| u - l).product()
    }
}

/// Indices of `n_lhs + 2` points of `x`: the first minimum and first maximum,
/// then for each of `n_lhs` LHS targets over `[min x, max x]` the nearest
/// point not yet taken (lowest index on ties). Returned in ascending order.
pub fn select_experimental_points(x: &[f64], n_lhs: usize, seed: u64) -> Result<Vec<usize>> {
    if x.len() < n_lhs + 2 {
        return Err(Error::invalid(format!(
            "need at least {} data points to select {} + 2, have {}",
            n_lhs + 2,
            n_lhs,
            x.len()
        )));
    }
    let mut i_min = 0;
    let mut i_max = 0;
    for (i, v) in x.iter().enumerate() {
        if *v < x[i_min] {
            i_min = i;
        }
        if *v > x[i_max] {
            i_max = i;
        }
    }
    if i_min == i_max {
        // all x equal: take the next index as the second anchor
        i_max = if i_min == 0 { 1 } else { 0 };
    }
    let (lo, hi) = (x[i_min], x[i_max]);
    let mut taken = vec![false; x.len()];
    taken[i_min] = true;
    taken[i_max] = true;
    let mut chosen = vec![i_min, i_max];
    for t in latin_hypercube(n_lhs, 1, seed) {
        let target = lo + t[0] * (hi - lo);
        let mut best: Option<usize> = None;
        for (i, v) in x.iter().enumerate() {
            if taken[i] {
                continue;
            }
            if best.is_none_or(|b| (v - target).abs() < (x[b] - target).abs()) {
                best = Some(i);
            }
        }
        let b = best.expect("enough points checked above");
        taken[b] = true;
        chosen.push(b);
    }
    chosen.sort_unstable();
    Ok(chosen)
}

/// Forward-model runs harvested at design points: `x` dimensionless,
/// `theta` as multipliers of `reference`, `y` as `u/c_sat`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticDataset {
    pub x: Vec<f64>,
    pub theta: Vec<Vec<f64>>,
    pub y: Vec<f64>,
    pub seed: u64,
    pub design_box: DesignBox,
    pub reference: CalibrationParameters,
    pub pool: usize,
}

impl SyntheticDataset {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        self.design_box.validate()?;
        if self.x.len() != self.y.len() || self.theta.len() != self.y.len() {
            return Err(Error::invalid("synthetic dataset columns differ in length"));
        }
        for (r, th) in self.theta.iter().enumerate() {
            if !self.design_box.contains(th) {
                return Err(Error::invalid(format!(
                    "synthetic record {r}: θ {th:?} outside the design box"
                )));
            }
        }
        if self.y.iter().chain(&self.x).any(|v| !v.is_finite()) {
            return Err(Error::invalid("synthetic dataset contains non-finite values"));
        }
        Ok(())
    }
}

/// Draws `pool` multiplier vectors by LHS over `design_box`, evaluates the model
/// at `x_design` for each, and keeps `keep` of the resulting records chosen
/// uniformly without replacement.
pub fn generate_synthetic<M: ForwardModel + ?Sized>(
    pool: usize,
    keep: usize,
    design_box: &DesignBox,
    x_design: &[f64],
    seed: u64,
    model: &M,
    reference: &CalibrationParameters,
) -> Result<SyntheticDataset> {
    design_box.validate()?;
    if pool == 0 || x_design.is_empty() {
        return Err(Error::invalid(
            "synthetic design needs pool > 0 and at least one x point",
        ));
    }
    if keep > pool * x_design.len() {
        return Err(Error::invalid(format!(
            "cannot keep {keep} records from {pool} simulations × {} points",
            x_design.len()
        )));
    }
    let draws: Vec<Vec<f64>> = latin_hypercube(pool, design_box.dim(), seed)
        .iter()
        .map(|u| design_box.from_unit(u))
        .collect();
    let outputs: Vec<Result<Vec<f64>>> = draws
        .par_iter()
        .map(|m| model.eta(&reference.scaled_by(m), x_design))
        .collect();

    let mut x = Vec::new();
    let mut theta = Vec::new();
    let mut y = Vec::new();
    let mut failed = 0;
    for (k, (m, out)) in draws.iter().zip(outputs).enumerate() {
        match out {
            Ok(ys) => {
                for (xi, yi) in x_design.iter().zip(ys) {
                    x.push(*xi);
                    theta.push(m.clone());
                    y.push(yi);
                }
            }
            Err(e) => {
                warn!("synthetic draw {k} (multipliers {m:?}) skipped: {e}");
                failed += 1;
            }
        }
    }
    if failed * 10 > pool {
        return Err(Error::TooManyFailures { failed, total: pool });
    }
    if keep > y.len() {
        return Err(Error::invalid(format!(
            "only {} records survived, cannot keep {keep}",
            y.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5EED_0F5A_3B1E);
    let mut idx = rand::seq::index::sample(&mut rng, y.len(), keep).into_vec();
    idx.sort_unstable();
    Ok(SyntheticDataset {
        x: idx.iter().map(|&i| x[i]).collect(),
        theta: idx.iter().map(|&i| theta[i].clone()).collect(),
        y: idx.iter().map(|&i| y[i]).collect(),
        seed,
        design_box: design_box.clone(),
        reference: *reference,
        pool,
    })
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    seed: u64,
    design_box: DesignBox,
    reference: CalibrationParameters,
    pool: usize,
    records: usize,
}

fn sidecar_path(csv_path: &Path) -> std::path::PathBuf {
    csv_path.with_extension("json")
}

/// Writes `x,theta1..thetaD,y` to `path` and the provenance to the same path
/// with a `.json` extension.
pub fn write_synthetic(path: &Path, s: &SyntheticDataset) -> Result<()> {
    let d = s.design_box.dim();
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["x".to_string()];
    header.extend((1..=d).map(|k| format!("theta{k}")));
    header.push("y".into());
    w.write_record(&header)?;
    for r in 0..s.len() {
        let mut rec = vec![format!("{:e}", s.x[r])];
        rec.extend(s.theta[r].iter().map(|v| format!("{v:e}")));
        rec.push(format!("{:e}", s.y[r]));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    write_json(
        &sidecar_path(path),
        &Sidecar {
            seed: s.seed,
            design_box: s.design_box.clone(),
            reference: s.reference,
            pool: s.pool,
            records: s.len(),
        },
    )
}

pub fn read_synthetic(path: &Path) -> Result<SyntheticDataset> {
    let meta: Sidecar = read_json(&sidecar_path(path))?;
    let d = meta.design_box.dim();
    let mut rdr = csv::Reader::from_path(path)?;
    let mut expected = vec!["x".to_string()];
    expected.extend((1..=d).map(|k| format!("theta{k}")));
    expected.push("y".into());
    let header = rdr.headers()?.clone();
    if header.iter().ne(expected.iter().map(String::as_str)) {
        return Err(Error::format(path, format!("expected header '{}'", expected.join(","))));
    }
    let (mut x, mut theta, mut y) = (Vec::new(), Vec::new(), Vec::new());
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let vals: Vec<f64> = rec
            .iter()
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::format(path, format!("row {}: non-numeric field", row + 1)))?;
        x.push(vals[0]);
        theta.push(vals[1..=d].to_vec());
        y.push(vals[d + 1]);
    }
    if y.len() != meta.records {
        return Err(Error::format(
            path,
            format!("sidecar says {} records, file has {}", meta.records, y.len()),
        ));
    }
    let s = SyntheticDataset {
        x,
        theta,
        y,
        seed: meta.seed,
        design_box: meta.design_box,
        reference: meta.reference,
        pool: meta.pool,
    };
    s.validate()?;
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Cheap analytic stand-in for the PDE.
    struct Toy;

    impl ForwardModel for Toy {
        fn eta(&self, theta: &CalibrationParameters, x: &[f64]) -> Result<Vec<f64>> {
            let m = theta.multipliers_of(&CalibrationParameters::REFERENCE);
            Ok(x.iter().map(|x| m[0] * x + m[1] * x * x - m[2] + m[3]).collect())
        }
    }

    fn stratified(pts: &[Vec<f64>], k: usize) -> bool {
        let n = pts.len();
        let mut counts = vec![0; n];
        for p in pts {
            counts[((p[k] * n as f64).floor() as usize).min(n - 1)] += 1;
        }
        counts.iter().all(|&c| c == 1)
    }

    #[test]
    fn lhs_single_point_and_deciles() {
        let one = latin_hypercube(1, 3, 4);
        assert!(one[0].iter().all(|v| *v > 0.0 && *v < 1.0));
        assert!(stratified(&latin_hypercube(10, 1, 9), 0));
        assert!(stratified(&latin_hypercube(28, 1, 1), 0));
        assert_eq!(latin_hypercube(7, 2, 5), latin_hypercube(7, 2, 5));
    }

    proptest! {
        #[test]
        fn lhs_marginals_stratified(n in 1usize..60, d in 1usize..6, seed in any::<u64>()) {
            let pts = latin_hypercube(n, d, seed);
            prop_assert_eq!(pts.len(), n);
            for k in 0..d {
                prop_assert!(stratified(&pts, k));
            }
        }
    }

    #[test]
    fn selection_anchors_and_subset() {
        let x: Vec<f64> = (0..100).map(|i| ((i * 37) % 100) as f64 / 99.0).collect();
        let two = select_experimental_points(&x, 0, 3).unwrap();
        assert_eq!(two.len(), 2);
        assert!(two.iter().any(|&i| x[i] == 0.0) && two.iter().any(|&i| x[i] == 1.0));
        let sel = select_experimental_points(&x, 28, 3).unwrap();
        assert_eq!(sel.len(), 30);
        let mut uniq = sel.clone();
        uniq.dedup();
        assert_eq!(uniq.len(), 30);
        assert!(select_experimental_points(&x[..5], 4, 0).is_err());
    }

    #[test]
    fn selection_tie_breaks_on_first_index() {
        let x = [0.0, 0.5, 0.5, 1.0, 1.0, 0.0];
        assert_eq!(select_experimental_points(&x, 0, 0).unwrap(), vec![0, 3]);
        assert_eq!(select_experimental_points(&x, 1, 0).unwrap().len(), 3);
    }

    #[test]
    fn synthetic_identity_subsample_and_box() {
        let xd = [0.0, 0.25, 0.5, 1.0];
        let b = DesignBox::default();
        let s = generate_synthetic(5, 20, &b, &xd, 11, &Toy, &CalibrationParameters::REFERENCE).unwrap();
        assert_eq!(s.len(), 20);
        s.validate().unwrap();
        for r in 0..s.len() {
            let th = CalibrationParameters::REFERENCE.scaled_by(&s.theta[r]);
            let y = Toy.eta(&th, &[s.x[r]]).unwrap()[0];
            assert!((y - s.y[r]).abs() < 1e-12);
        }
        assert!(generate_synthetic(5, 21, &b, &xd, 11, &Toy, &CalibrationParameters::REFERENCE).is_err());
    }

    #[test]
    fn synthetic_deterministic_and_round_trips() {
        let xd = [0.1, 0.9];
        let b = DesignBox::default();
        let a = generate_synthetic(50, 30, &b, &xd, 2, &Toy, &CalibrationParameters::REFERENCE).unwrap();
        let c = generate_synthetic(50, 30, &b, &xd, 2, &Toy, &CalibrationParameters::REFERENCE).unwrap();
        assert_eq!(a, c);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("synth.csv");
        write_synthetic(&path, &a).unwrap();
        let back = read_synthetic(&path).unwrap();
        assert_eq!(back.len(), a.len());
        for r in 0..a.len() {
            assert_eq!(back.y[r], a.y[r]);
            assert_eq!(back.theta[r], a.theta[r]);
        }
    }

    struct Flaky;

    impl ForwardModel for Flaky {
        fn eta(&self, theta: &CalibrationParameters, x: &[f64]) -> Result<Vec<f64>> {
            if theta.tau_n > 3.0 * CalibrationParameters::REFERENCE.tau_n {
                Err(Error::StepUnderflow { t: 0.0 })
            } else {
                Ok(vec![0.0; x.len()])
            }
        }
    }

    #[test]
    fn too_many_failures_is_an_error() {
        let r = generate_synthetic(
            20,
            1,
            &DesignBox::default(),
            &[0.5],
            0,
            &Flaky,
            &CalibrationParameters::REFERENCE,
        );
        assert!(matches!(r, Err(Error::TooManyFailures { .. })));
    }
}
