//! Dry weight from silhouette area: per-species least squares on
//! `ln(weight) = a + b ln(area)`.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct RegressionFit<T: Scalar = f64> {
    pub species: String,
    /// Intercept `a` of the log-log line.
    pub intercept: T,
    /// Slope `b` (allometric exponent).
    pub slope: T,
    /// `SSR / (n - 2)`.
    pub residual_variance: T,
    pub r_squared: T,
    pub slope_std_error: T,
    /// Two-sided t-test of `slope != 0` with `n - 2` degrees of freedom.
    pub slope_p_value: f64,
    pub n: usize,
}

impl<T: Scalar> RegressionFit<T> {
    pub fn fitted_log(&self, area: T) -> T {
        self.intercept + self.slope * area.ln()
    }
}

/// Least-squares fit on `(area, weight)` pairs after log transform.
pub fn fit_species<T: Scalar>(species: &str, pairs: &[(T, T)]) -> Result<RegressionFit<T>> {
    let offenders: Vec<String> = pairs
        .iter()
        .enumerate()
        .filter(|(_, (a, w))| !(*a > T::zero()) || !(*w > T::zero()))
        .map(|(i, (a, w))| format!("#{i} (area {a}, weight {w})"))
        .collect();
    if !offenders.is_empty() {
        return Err(Error::Data(format!(
            "{species}: non-positive area or weight at {}",
            offenders.join(", ")
        )));
    }
    if pairs.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "{species}: {} weighed specimens, need at least 3",
            pairs.len()
        )));
    }
    let n = T::from_usize_lossy(pairs.len());
    let xs: Vec<T> = pairs.iter().map(|(a, _)| a.ln()).collect();
    let ys: Vec<T> = pairs.iter().map(|(_, w)| w.ln()).collect();
    let mx = xs.iter().copied().sum::<T>() / n;
    let my = ys.iter().copied().sum::<T>() / n;
    let sxx: T = xs.iter().map(|&x| (x - mx) * (x - mx)).sum();
    let sxy: T = xs.iter().zip(&ys).map(|(&x, &y)| (x - mx) * (y - my)).sum();
    let sst: T = ys.iter().map(|&y| (y - my) * (y - my)).sum();
    if !(sxx > T::zero()) {
        return Err(Error::InsufficientData(format!(
            "{species}: all areas identical, slope undefined"
        )));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ssr: T = xs
        .iter()
        .zip(&ys)
        .map(|(&x, &y)| {
            let r = y - intercept - slope * x;
            r * r
        })
        .sum();
    let df = pairs.len() - 2;
    let residual_variance = ssr / T::from_usize_lossy(df);
    let r_squared = if sst > T::zero() {
        (T::one() - ssr / sst).max(T::zero()).min(T::one())
    } else {
        T::zero()
    };
    let slope_std_error = (residual_variance / sxx).sqrt();
    let slope_p_value = slope_p_value(slope.to_f64_lossy(), slope_std_error.to_f64_lossy(), df);
    Ok(RegressionFit {
        species: species.to_owned(),
        intercept,
        slope,
        residual_variance,
        r_squared,
        slope_std_error,
        slope_p_value,
        n: pairs.len(),
    })
}

fn slope_p_value(slope: f64, se: f64, df: usize) -> f64 {
    if slope == 0.0 {
        return 1.0;
    }
    if se == 0.0 {
        return 0.0;
    }
    let t = (slope / se).abs();
    let dist = StudentsT::new(0.0, 1.0, df as f64).expect("df >= 1");
    (2.0 * (1.0 - dist.cdf(t))).clamp(0.0, 1.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightPrediction<T = f64> {
    pub grams: T,
    /// Multiplied by `exp(residual_variance / 2)`.
    pub bias_corrected: bool,
}

/// `exp(a + b ln(area))`, optionally with the log-normal back-transform
/// correction.
pub fn predict_weight<T: Scalar>(
    fit: &RegressionFit<T>,
    mean_area: T,
    bias_correction: bool,
) -> Result<WeightPrediction<T>> {
    if !(mean_area > T::zero()) {
        return Err(Error::Parameter(format!("area must be positive, got {mean_area}")));
    }
    let mut grams = fit.fitted_log(mean_area).exp();
    if bias_correction {
        grams = grams * (fit.residual_variance / T::lit(2.0)).exp();
    }
    Ok(WeightPrediction {
        grams,
        bias_corrected: bias_correction,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkippedSpecies {
    pub species: String,
    pub weighed: usize,
    pub reason: String,
}

/// One weighed specimen, with the area in the units used for fitting.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeighedPoint {
    pub species: String,
    pub specimen_id: String,
    pub area: f64,
    pub dry_weight_g: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BiomassReport {
    pub fits: BTreeMap<String, RegressionFit>,
    pub skipped: Vec<SkippedSpecies>,
    pub points: Vec<WeighedPoint>,
    /// Area unit conversion applied, if any.
    pub mm2_per_px: Option<f64>,
}

/// Fit every species with at least three weighed specimens; list the rest.
/// `mm2_per_px` converts pixel areas before fitting.
pub fn fit_all(ds: &Dataset, mm2_per_px: Option<f64>) -> BiomassReport {
    let scale = mm2_per_px.unwrap_or(1.0);
    let mut report = BiomassReport {
        mm2_per_px,
        ..Default::default()
    };
    for (label, species) in ds.registry.names().iter().enumerate() {
        let points: Vec<WeighedPoint> = ds
            .specimens
            .iter()
            .filter(|s| s.label == label)
            .filter_map(|s| {
                s.dry_weight_g.map(|w| WeighedPoint {
                    species: species.clone(),
                    specimen_id: s.specimen_id.clone(),
                    area: s.mean_area_px2 * scale,
                    dry_weight_g: w,
                })
            })
            .collect();
        let pairs: Vec<(f64, f64)> = points.iter().map(|p| (p.area, p.dry_weight_g)).collect();
        if pairs.len() < 3 {
            report.skipped.push(SkippedSpecies {
                species: species.clone(),
                weighed: pairs.len(),
                reason: "fewer than 3 weighed specimens".into(),
            });
        } else {
            match fit_species(species, &pairs) {
                Ok(fit) => {
                    report.fits.insert(species.clone(), fit);
                }
                Err(e) => report.skipped.push(SkippedSpecies {
                    species: species.clone(),
                    weighed: pairs.len(),
                    reason: e.to_string(),
                }),
            }
        }
        report.points.extend(points);
    }
    report
}

/// `species,a,b,r2,p,n`
pub fn write_fits_csv<W: Write>(w: W, report: &BiomassReport) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["species", "a", "b", "r2", "p", "n"])?;
    for fit in report.fits.values() {
        out.write_record([
            fit.species.clone(),
            fit.intercept.to_string(),
            fit.slope.to_string(),
            fit.r_squared.to_string(),
            fit.slope_p_value.to_string(),
            fit.n.to_string(),
        ])?;
    }
    out.flush().map_err(|e| Error::io("<fits>", e))?;
    Ok(())
}

/// Scatter points with the fitted line, one row per weighed specimen.
pub fn write_scatter_csv<W: Write>(w: W, report: &BiomassReport) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "species",
        "specimen_id",
        "area",
        "dry_weight_g",
        "log_area",
        "log_weight",
        "fitted_log_weight",
    ])?;
    for p in &report.points {
        let fitted = report
            .fits
            .get(&p.species)
            .filter(|_| p.area > 0.0)
            .map(|f| f.fitted_log(p.area).to_string())
            .unwrap_or_default();
        let log = |v: f64| if v > 0.0 { v.ln().to_string() } else { String::new() };
        out.write_record([
            p.species.clone(),
            p.specimen_id.clone(),
            p.area.to_string(),
            p.dry_weight_g.to_string(),
            log(p.area),
            log(p.dry_weight_g),
            fitted,
        ])?;
    }
    out.flush().map_err(|e| Error::io("<scatter>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::fixtures::specimen;
    use crate::dataset::{CameraSettings, LabelRegistry};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    /// Solve (X'X) beta = X'y for X = [1, x] by Cramer's rule.
    fn normal_equations(xs: &[f64], ys: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let sx: f64 = xs.iter().sum();
        let sxx: f64 = xs.iter().map(|x| x * x).sum();
        let sy: f64 = ys.iter().sum();
        let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| x * y).sum();
        let det = n * sxx - sx * sx;
        ((sxx * sy - sx * sxy) / det, (n * sxy - sx * sy) / det)
    }

    #[test]
    fn noiseless_power_law_is_recovered() {
        let pairs: Vec<(f64, f64)> = [800.0, 1500.0, 2600.0, 4000.0, 9000.0]
            .iter()
            .map(|&a: &f64| (a, 0.002 * a.powf(1.5)))
            .collect();
        let fit = fit_species("x", &pairs).unwrap();
        assert!((fit.slope - 1.5).abs() < 1e-9);
        assert!((fit.intercept - 0.002f64.ln()).abs() < 1e-9);
        assert!((fit.r_squared - 1.0).abs() < 1e-9);
        assert!(fit.slope_p_value < 1e-6);
        // 0.002 * 10000^1.5 = 2000
        let w = predict_weight(&fit, 10_000.0, false).unwrap();
        assert!((w.grams - 2000.0).abs() / 2000.0 < 1e-6);
        for &(a, wt) in &pairs {
            let p = predict_weight(&fit, a, false).unwrap().grams;
            assert!((p - wt).abs() / wt < 1e-6);
        }
    }

    #[test]
    fn identity_fit_predicts_area() {
        let fit = RegressionFit {
            species: "id".into(),
            intercept: 0.0,
            slope: 1.0,
            residual_variance: 0.5,
            r_squared: 1.0,
            slope_std_error: 0.0,
            slope_p_value: 0.0,
            n: 3,
        };
        assert_eq!(predict_weight(&fit, 1.0, false).unwrap().grams, 1.0);
        let c = predict_weight(&fit, 1.0, true).unwrap();
        assert!(c.bias_corrected);
        assert!((c.grams - 0.25f64.exp()).abs() < 1e-15);
        assert!(predict_weight(&fit, 0.0, false).is_err());
    }

    #[test]
    fn invalid_inputs() {
        let err = fit_species("x", &[(1.0, 1.0), (0.0, 2.0), (3.0, -1.0)]).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("#1") && msg.contains("#2"), "{msg}");
        assert!(matches!(
            fit_species("x", &[(1.0, 1.0), (2.0, 2.0)]),
            Err(Error::InsufficientData(_))
        ));
        assert!(fit_species("x", &[(5.0, 1.0), (5.0, 2.0), (5.0, 3.0)]).is_err());
    }

    #[test]
    fn matches_normal_equation_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..100 {
            let n = rng.random_range(3..40);
            let b = rng.random_range(0.5..2.5);
            let a = rng.random_range(-9.0..-3.0);
            let noise = Normal::new(0.0, rng.random_range(0.01..0.5)).unwrap();
            let pairs: Vec<(f64, f64)> = (0..n)
                .map(|_| {
                    let area: f64 = rng.random_range(100.0..20000.0);
                    (area, (a + b * area.ln() + noise.sample(&mut rng)).exp())
                })
                .collect();
            let fit = fit_species("r", &pairs).unwrap();
            let xs: Vec<f64> = pairs.iter().map(|p| p.0.ln()).collect();
            let ys: Vec<f64> = pairs.iter().map(|p| p.1.ln()).collect();
            let (oa, ob) = normal_equations(&xs, &ys);
            assert!((fit.intercept - oa).abs() <= 1e-9 * oa.abs().max(1.0));
            assert!((fit.slope - ob).abs() <= 1e-9 * ob.abs().max(1.0));
            assert!((0.0..=1.0).contains(&fit.r_squared));
        }
    }

    #[test]
    fn r_squared_invariant_under_area_scaling() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pairs: Vec<(f64, f64)> = (0..20)
            .map(|_| {
                let a: f64 = rng.random_range(500.0..5000.0);
                (a, 0.001 * a.powf(1.2) * rng.random_range(0.7..1.3))
            })
            .collect();
        let base = fit_species("s", &pairs).unwrap();
        let scaled: Vec<(f64, f64)> = pairs.iter().map(|&(a, w)| (a * 0.0123, w)).collect();
        let fit = fit_species("s", &scaled).unwrap();
        assert!((fit.r_squared - base.r_squared).abs() < 1e-12);
        assert!((fit.slope - base.slope).abs() < 1e-12);
        assert!((fit.slope_p_value - base.slope_p_value).abs() < 1e-9);
    }

    #[test]
    fn null_slope_p_values_are_roughly_uniform() {
        // weights independent of area: p should be uniform on [0, 1]
        let mut ps = Vec::new();
        let mut slopes = 0.0;
        let noise = Normal::new(0.0, 0.3).unwrap();
        for seed in 0..400 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pairs: Vec<(f64, f64)> = (0..15)
                .map(|_| (rng.random_range(200.0..8000.0), (-5.0f64 + noise.sample(&mut rng)).exp()))
                .collect();
            let fit = fit_species("null", &pairs).unwrap();
            slopes += fit.slope;
            ps.push(fit.slope_p_value);
        }
        assert!((slopes / 400.0).abs() < 0.02, "{}", slopes / 400.0);
        let frac_sig = ps.iter().filter(|&&p| p < 0.05).count() as f64 / ps.len() as f64;
        assert!((frac_sig - 0.05).abs() < 0.035, "{frac_sig}");
        let mean_p = ps.iter().sum::<f64>() / ps.len() as f64;
        assert!((mean_p - 0.5).abs() < 0.05, "{mean_p}");
    }

    #[test]
    fn p_value_matches_reference_quantile() {
        // t = 2.228 is the two-sided 5% critical value at 10 df
        assert!((slope_p_value(2.228, 1.0, 10) - 0.05).abs() < 1e-3);
    }

    #[test]
    fn f32_fit() {
        let pairs: Vec<(f32, f32)> = [800.0f32, 1500.0, 2600.0, 4000.0]
            .iter()
            .map(|&a| (a, 0.002 * a.powf(1.5)))
            .collect();
        let fit = fit_species("x", &pairs).unwrap();
        assert!((fit.slope - 1.5).abs() < 1e-3);
    }

    #[test]
    fn fit_all_partitions_species() {
        let mut ds = Dataset::new(
            CameraSettings::default(),
            LabelRegistry::new(["Do_gr", "Do_pl", "Ta_am", "Xy_du"]).unwrap(),
        );
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for (label, n) in [(0usize, 20usize), (1, 25), (2, 20), (3, 2)] {
            for i in 0..n {
                let mut s = specimen(&format!("{label}_{i}"), label, 2);
                let area = rng.random_range(400.0..6000.0);
                for f in &mut s.frames {
                    f.silhouette_area_px2 = area as u64;
                }
                s.refresh_mean_area();
                s.dry_weight_g = Some(0.0005 * (s.mean_area_px2 / 1000.0).powf(1.4));
                ds.specimens.push(s);
            }
        }
        let r = fit_all(&ds, None);
        assert_eq!(r.fits.len(), 3);
        assert_eq!(r.skipped.len(), 1);
        assert_eq!(r.skipped[0].species, "Xy_du");
        assert_eq!(r.fits.len() + r.skipped.len(), ds.registry.len());
        let mut buf = Vec::new();
        write_fits_csv(&mut buf, &r).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("species,a,b,r2,p,n\n"));
        assert_eq!(text.lines().count(), 4);
        let mut buf = Vec::new();
        write_scatter_csv(&mut buf, &r).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 1 + 67);
    }
}
