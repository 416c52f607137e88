//! Dataset ingestion and export, synthetic data generation, and the
//! age-category descriptive table.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::family::ModelSpec;
use crate::model::{sigma_t, GrowthDataset, ThetaVB};
use crate::smsn;

/// Reads an `age,length` CSV (header required, columns in any order).
///
/// Every row must hold two positive numbers; offending rows are reported by
/// their 1-based line number.
pub fn load_csv(path: impl AsRef<Path>) -> Result<GrowthDataset> {
    let path = path.as_ref();
    let input = |msg: String| Error::Input {
        path: path.display().to_string(),
        msg,
    };
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| input(e.to_string()))?;
    let headers = rdr.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h.eq_ignore_ascii_case(name));
    let (Some(ia), Some(il)) = (col("age"), col("length")) else {
        return Err(input(format!(
            "header must name columns 'age' and 'length', found {:?}",
            headers.iter().collect::<Vec<_>>()
        )));
    };

    let mut ages = Vec::new();
    let mut lengths = Vec::new();
    let mut bad = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let parse = |i: usize| rec.get(i).and_then(|s| s.parse::<f64>().ok());
        match (parse(ia), parse(il)) {
            (Some(a), Some(l)) if a.is_finite() && l.is_finite() && a > 0.0 && l > 0.0 => {
                ages.push(a);
                lengths.push(l);
            }
            (Some(a), Some(l)) if a.is_finite() && l.is_finite() => bad.push(format!(
                "line {line}: age and length must be positive (age={a}, length={l})"
            )),
            _ => bad.push(format!("line {line}: non-numeric or missing field")),
        }
    }
    if ages.is_empty() && bad.is_empty() {
        return Err(input("no data rows".into()));
    }
    if !bad.is_empty() {
        let all = if ages.is_empty() { " (all rows invalid)" } else { "" };
        return Err(input(format!("{} invalid row(s){all}: {}", bad.len(), bad.join("; "))));
    }
    GrowthDataset::new(ages, lengths)
}

/// Writes `age,length` with shortest round-trip float formatting.
pub fn save_csv(data: &GrowthDataset, path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["age", "length"])?;
    for (a, l) in data.iter() {
        w.write_record([a.to_string(), l.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SyntheticOptions {
    /// Replace non-positive simulated lengths with this positive floor.
    pub length_floor: Option<f64>,
}

/// `y_t = η_t + ε_t` with SMSN errors; deterministic per seed.
pub fn generate_synthetic(theta: &ThetaVB, spec: &ModelSpec, ages: &[f64], seed: u64) -> Result<GrowthDataset> {
    generate_synthetic_with(theta, spec, ages, seed, &SyntheticOptions::default())
}

pub fn generate_synthetic_with(
    theta: &ThetaVB,
    spec: &ModelSpec,
    ages: &[f64],
    seed: u64,
    opts: &SyntheticOptions,
) -> Result<GrowthDataset> {
    theta.validate()?;
    spec.validate()?;
    if ages.is_empty() {
        return Err(Error::InvalidParameter("no ages given".into()));
    }
    let sig = ages.iter().map(|&a| sigma_t(theta, a)).collect::<Result<Vec<_>>>()?;
    let lambda = if spec.family.has_shape() { theta.lambda } else { 0.0 };
    let errors = smsn::sample_smsn_error(ages.len(), &sig, lambda, spec, seed)?;
    let mut lengths: Vec<f64> = ages.iter().zip(&errors).map(|(&a, e)| theta.vb_mean(a) + e).collect();
    let nonpos = lengths.iter().filter(|&&l| l <= 0.0).count();
    if nonpos > 0 {
        match opts.length_floor {
            Some(floor) if floor > 0.0 => lengths.iter_mut().for_each(|l| *l = l.max(floor)),
            Some(floor) => {
                return Err(Error::InvalidParameter(format!(
                    "length floor must be positive, got {floor}"
                )))
            }
            None => log::warn!("{nonpos} simulated length(s) are non-positive"),
        }
    }
    GrowthDataset::new(ages.to_vec(), lengths)
}

/// `n` ages drawn uniformly from `[lo, hi]`.
pub fn uniform_ages(n: usize, lo: f64, hi: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.random_range(lo..=hi)).collect()
}

/// Lengths summarized over one age category.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgeBin {
    pub label: String,
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
    pub min: Option<f64>,
    pub max: Option<f64>,
    pub mean: Option<f64>,
    pub sd: Option<f64>,
    pub proportion: f64,
}

/// Age categories 1–3, 3–8, 8–13, …, 53–58, 58–61.
pub const AGE_BIN_EDGES: [f64; 14] = [
    1.0, 3.0, 8.0, 13.0, 18.0, 23.0, 28.0, 33.0, 38.0, 43.0, 48.0, 53.0, 58.0, 61.0,
];

fn bin_index(age: f64) -> Option<usize> {
    if age < AGE_BIN_EDGES[1] {
        return Some(0);
    }
    if age <= AGE_BIN_EDGES[2] {
        return Some(1);
    }
    (2..AGE_BIN_EDGES.len() - 1).find(|&i| age > AGE_BIN_EDGES[i] && age <= AGE_BIN_EDGES[i + 1])
}

/// Descriptive statistics of length by age category. Ages beyond the last
/// edge are collected in a trailing open bin.
pub fn describe(data: &GrowthDataset) -> Vec<AgeBin> {
    let nb = AGE_BIN_EDGES.len() - 1;
    let mut groups: Vec<Vec<f64>> = vec![Vec::new(); nb + 1];
    for (a, l) in data.iter() {
        groups[bin_index(a).unwrap_or(nb)].push(l);
    }
    let total = data.len() as f64;
    let mut out = Vec::new();
    for (i, g) in groups.iter().enumerate() {
        let (lo, hi, label) = if i < nb {
            let (lo, hi) = (AGE_BIN_EDGES[i], AGE_BIN_EDGES[i + 1]);
            (lo, hi, format!("{lo} - {hi}"))
        } else {
            if g.is_empty() {
                continue;
            }
            let lo = AGE_BIN_EDGES[nb];
            (lo, f64::INFINITY, format!("> {lo}"))
        };
        let n = g.len();
        let mean = (n > 0).then(|| g.iter().sum::<f64>() / n as f64);
        let sd = (n > 1).then(|| {
            let m = mean.unwrap_or(0.0);
            (g.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        });
        out.push(AgeBin {
            label,
            lo,
            hi,
            n,
            min: g.iter().copied().reduce(f64::min),
            max: g.iter().copied().reduce(f64::max),
            mean,
            sd,
            proportion: n as f64 / total,
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn loads_two_rows() {
        let f = write("age,length\n10,24.3\n20,30.1\n");
        let d = load_csv(f.path()).unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d.lengths(), &[24.3, 30.1]);
    }

    #[test]
    fn columns_any_order() {
        let f = write("length,age\n24.3,10\n");
        let d = load_csv(f.path()).unwrap();
        assert_eq!(d.ages(), &[10.0]);
    }

    #[test]
    fn zero_age_names_line() {
        let f = write("age,length\n10,24.3\n0,30.1\n");
        let e = load_csv(f.path()).unwrap_err().to_string();
        assert!(e.contains("line 3"), "{e}");
    }

    #[test]
    fn descriptive_errors() {
        let e = load_csv(write("").path()).unwrap_err().to_string();
        assert!(e.contains("header"), "{e}");
        let e = load_csv(write("age,len\n1,2\n").path()).unwrap_err().to_string();
        assert!(e.contains("'length'"), "{e}");
        let e = load_csv(write("age,length\n").path()).unwrap_err().to_string();
        assert!(e.contains("no data rows"), "{e}");
        let e = load_csv(write("age,length\nx,1\n-1,2\n").path())
            .unwrap_err()
            .to_string();
        assert!(
            e.contains("all rows invalid") && e.contains("line 2") && e.contains("line 3"),
            "{e}"
        );
    }

    #[test]
    fn synthetic_is_seeded() {
        let th = ThetaVB::new(35.0, 0.1, -1.0, 4.0, -0.5, 1.0).unwrap();
        let spec = ModelSpec::skew_t(8.0).unwrap();
        let ages = uniform_ages(50, 3.0, 61.0, 1);
        let a = generate_synthetic(&th, &spec, &ages, 9).unwrap();
        let b = generate_synthetic(&th, &spec, &ages, 9).unwrap();
        assert_eq!(a, b);
        assert!(ages.iter().all(|&x| (3.0..=61.0).contains(&x)));
    }

    #[test]
    fn noiseless_limit() {
        let th = ThetaVB::new(35.0, 0.1, -1.0, 1e-12, 0.0, 0.0).unwrap();
        let ages = uniform_ages(100, 3.0, 61.0, 2);
        let d = generate_synthetic(&th, &ModelSpec::normal(), &ages, 3).unwrap();
        for (a, l) in d.iter() {
            assert!((l - th.vb_mean(a)).abs() < 1e-4);
        }
    }

    #[test]
    fn floor_clips() {
        let th = ThetaVB::new(1.0, 0.1, -1.0, 100.0, 0.0, 0.0).unwrap();
        let ages = uniform_ages(200, 3.0, 61.0, 2);
        let opts = SyntheticOptions {
            length_floor: Some(0.01),
        };
        let d = generate_synthetic_with(&th, &ModelSpec::normal(), &ages, 3, &opts).unwrap();
        assert!(d.lengths().iter().all(|&l| l >= 0.01));
    }

    #[test]
    fn describe_bins() {
        let d = GrowthDataset::new(
            vec![2.0, 3.0, 8.0, 8.5, 61.0, 70.0],
            vec![13.0, 12.0, 26.0, 19.0, 33.0, 34.0],
        )
        .unwrap();
        let bins = describe(&d);
        assert_eq!(bins.len(), 14);
        assert_eq!(bins[0].n, 1);
        assert_eq!(bins[1].n, 2);
        assert_eq!(bins[2].n, 1);
        assert_eq!(bins[12].n, 1);
        assert_eq!(bins[13].n, 1);
        assert_eq!(
            bins[1].sd.map(|s| (s - 9.899_494_936_611_665).abs() < 1e-12),
            Some(true)
        );
        let total: usize = bins.iter().map(|b| b.n).sum();
        assert_eq!(total, d.len());
    }
}
