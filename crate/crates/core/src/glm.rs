//! Outcome models with treatment interactions,
//! `link⁻¹(β0 + β1·x + β2·t + β3·x·t)`, used to synthesize mean potential
//! outcomes from observational rows.
//!
//! Linear fits are ordinary least squares on centered columns solved by
//! SVD, so rank-deficient designs get the minimum-norm slope vector and an
//! unpenalized intercept. Logistic fits use iteratively reweighted least
//! squares with an optional ridge on everything but the intercept.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::datasets::ClinicalRow;
use crate::error::{Error, Result};
use crate::features::{FeatureKind, FeatureSpec, FeatureValue};

pub const DEFAULT_RIDGE: f64 = 1e-6;
pub const IRLS_TOLERANCE: f64 = 1e-8;
pub const IRLS_MAX_ITERATIONS: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ColumnSource {
    Level {
        feature: String,
        level: String,
    },
    Numeric {
        feature: String,
        center: f64,
        scale: f64,
    },
}

/// Column layout of an encoded design, enough to encode new rows the same
/// way.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Encoding {
    pub features: Vec<FeatureSpec>,
    pub columns: Vec<ColumnSource>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EncodeOptions {
    /// Center and scale numeric columns by their training mean and
    /// standard deviation.
    pub standardize: bool,
}

#[derive(Debug, Clone)]
pub struct EncodedDesign {
    pub x: DMatrix<f64>,
    pub encoding: Encoding,
}

fn category_label(v: &FeatureValue) -> String {
    match v {
        FeatureValue::Category(s) => s.clone(),
        FeatureValue::Number(n) => n.to_string(),
    }
}

fn feature<'a>(row: &'a ClinicalRow, name: &str) -> Result<&'a FeatureValue> {
    row.features
        .get(name)
        .ok_or_else(|| Error::MissingFeature(name.to_string()))
}

fn numeric(row: &ClinicalRow, name: &str, line: usize) -> Result<f64> {
    feature(row, name)?
        .as_number()
        .ok_or_else(|| Error::MalformedRecord {
            line,
            reason: format!("feature {name:?} is not numeric"),
        })
}

impl Encoding {
    pub fn width(&self) -> usize {
        self.columns.len()
    }

    /// Encodes one row; categorical levels must have been seen at fit time.
    pub fn encode(&self, row: &ClinicalRow) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.columns.len()];
        let mut level_cols: HashMap<(&str, &str), usize> = HashMap::new();
        for (j, c) in self.columns.iter().enumerate() {
            if let ColumnSource::Level { feature, level } = c {
                level_cols.insert((feature.as_str(), level.as_str()), j);
            }
        }
        for (j, c) in self.columns.iter().enumerate() {
            if let ColumnSource::Numeric {
                feature,
                center,
                scale,
            } = c
            {
                out[j] = (numeric(row, feature, 0)? - center) / scale;
            }
        }
        for spec in self
            .features
            .iter()
            .filter(|f| f.kind == FeatureKind::Categorical)
        {
            let level = category_label(feature(row, &spec.name)?);
            let j = level_cols
                .get(&(spec.name.as_str(), level.as_str()))
                .ok_or_else(|| Error::UnknownLevelAtPredictTime {
                    feature: spec.name.clone(),
                    level: level.clone(),
                })?;
            out[*j] = 1.0;
        }
        Ok(out)
    }
}

/// Full one-hot encoding of categorical features (one column per observed
/// level, first-appearance order) with numeric features passed through.
pub fn one_hot_encode(rows: &[ClinicalRow], schema: &[FeatureSpec]) -> Result<EncodedDesign> {
    one_hot_encode_with(rows, schema, EncodeOptions::default())
}

pub fn one_hot_encode_with(
    rows: &[ClinicalRow],
    schema: &[FeatureSpec],
    opts: EncodeOptions,
) -> Result<EncodedDesign> {
    if rows.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut columns = Vec::new();
    for spec in schema {
        match spec.kind {
            FeatureKind::Numeric => {
                let vals = rows
                    .iter()
                    .enumerate()
                    .map(|(i, r)| numeric(r, &spec.name, i + 1))
                    .collect::<Result<Vec<f64>>>()?;
                let (center, scale) = if opts.standardize {
                    let n = vals.len() as f64;
                    let mean = vals.iter().sum::<f64>() / n;
                    let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
                    (mean, if var > 0.0 { var.sqrt() } else { 1.0 })
                } else {
                    (0.0, 1.0)
                };
                columns.push(ColumnSource::Numeric {
                    feature: spec.name.clone(),
                    center,
                    scale,
                });
            }
            FeatureKind::Categorical => {
                let mut seen: Vec<String> = Vec::new();
                for r in rows {
                    let level = category_label(feature(r, &spec.name)?);
                    if !seen.contains(&level) {
                        seen.push(level);
                    }
                }
                columns.extend(seen.into_iter().map(|level| ColumnSource::Level {
                    feature: spec.name.clone(),
                    level,
                }));
            }
        }
    }
    let encoding = Encoding {
        features: schema.to_vec(),
        columns,
    };
    let width = encoding.width();
    let mut x = DMatrix::zeros(rows.len(), width);
    for (i, r) in rows.iter().enumerate() {
        let v = encoding.encode(r)?;
        for (j, val) in v.into_iter().enumerate() {
            x[(i, j)] = val;
        }
    }
    Ok(EncodedDesign { x, encoding })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Logistic,
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Diagnostics {
    Logistic { auc: f64, accuracy: f64 },
    Linear { rmse: f64, r2: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub family: Family,
    pub beta0: f64,
    pub beta1: Vec<f64>,
    pub beta2: f64,
    pub beta3: Vec<f64>,
    pub encoding: Encoding,
    pub diagnostics: Diagnostics,
    pub converged: bool,
    pub iterations: usize,
    pub ridge: f64,
}

impl FitResult {
    fn linear_predictor(&self, x: &[f64], t: f64) -> Result<f64> {
        if x.len() != self.beta1.len() {
            return Err(Error::WidthMismatch {
                expected: self.beta1.len(),
                got: x.len(),
            });
        }
        let main: f64 = x.iter().zip(&self.beta1).map(|(a, b)| a * b).sum();
        let inter: f64 = x.iter().zip(&self.beta3).map(|(a, b)| a * b).sum();
        Ok(self.beta0 + main + self.beta2 * t + t * inter)
    }

    /// Coefficients laid out as the interaction design's columns.
    pub fn coefficients(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(2 * self.beta1.len() + 2);
        out.push(self.beta0);
        out.extend(&self.beta1);
        out.push(self.beta2);
        out.extend(&self.beta3);
        out
    }
}

/// Mean potential outcome at encoded covariates `x` under treatment `t`.
///
/// Logistic fits model `P(Y = 1)` for outcomes coded ±1, so the mean is
/// `2P − 1`.
pub fn predict_mu(fit: &FitResult, x_encoded: &[f64], t: bool) -> Result<f64> {
    let eta = fit.linear_predictor(x_encoded, if t { 1.0 } else { 0.0 })?;
    Ok(match fit.family {
        Family::Linear => eta,
        Family::Logistic => 2.0 * sigmoid(eta) - 1.0,
    })
}

/// `[1 | X | t | X·t]`.
pub fn interaction_design(x: &DMatrix<f64>, t: &[bool]) -> DMatrix<f64> {
    let (n, w) = x.shape();
    let mut d = DMatrix::zeros(n, 2 * w + 2);
    for i in 0..n {
        let ti = if t[i] { 1.0 } else { 0.0 };
        d[(i, 0)] = 1.0;
        for j in 0..w {
            d[(i, 1 + j)] = x[(i, j)];
            d[(i, w + 2 + j)] = x[(i, j)] * ti;
        }
        d[(i, w + 1)] = ti;
    }
    d
}

fn check_shapes(design: &EncodedDesign, t: &[bool], y: &[f64]) -> Result<()> {
    let n = design.x.nrows();
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    if t.len() != n || y.len() != n {
        return Err(Error::LengthMismatch {
            what: "treatment/outcome",
            expected: n,
            got: t.len().min(y.len()),
        });
    }
    Ok(())
}

fn split_coefficients(beta: &[f64], w: usize) -> (f64, Vec<f64>, f64, Vec<f64>) {
    (
        beta[0],
        beta[1..=w].to_vec(),
        beta[w + 1],
        beta[w + 2..].to_vec(),
    )
}

/// Minimum-norm least-squares solution via SVD.
fn min_norm_solve(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let (m, n) = a.shape();
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let eps = smax * (m.max(n) as f64) * f64::EPSILON;
    svd.solve(b, eps)
        .map_err(|e| Error::Numerical(e.to_string()))
}

/// Ordinary least squares on the interaction design.
pub fn fit_linear(design: &EncodedDesign, t: &[bool], y: &[f64]) -> Result<FitResult> {
    check_shapes(design, t, y)?;
    let full = interaction_design(&design.x, t);
    let (n, p) = full.shape();
    // Center every non-intercept column and the target; the intercept is
    // recovered from the means afterwards.
    let means: Vec<f64> = (1..p).map(|j| full.column(j).mean()).collect();
    let ymean = y.iter().sum::<f64>() / n as f64;
    let centered = DMatrix::from_fn(n, p - 1, |i, j| full[(i, j + 1)] - means[j]);
    let yc = DVector::from_iterator(n, y.iter().map(|v| v - ymean));
    let slopes = min_norm_solve(&centered, &yc)?;
    let beta0 = ymean - slopes.iter().zip(&means).map(|(b, m)| b * m).sum::<f64>();
    let mut beta = vec![beta0];
    beta.extend(slopes.iter());

    let fitted = &full * DVector::from_vec(beta.clone());
    let ss_res: f64 = fitted.iter().zip(y).map(|(f, v)| (v - f).powi(2)).sum();
    let ss_tot: f64 = y.iter().map(|v| (v - ymean).powi(2)).sum();
    let rmse = (ss_res / n as f64).sqrt();
    let r2 = if ss_tot > 0.0 {
        1.0 - ss_res / ss_tot
    } else {
        0.0
    };

    let w = design.encoding.width();
    let (beta0, beta1, beta2, beta3) = split_coefficients(&beta, w);
    Ok(FitResult {
        family: Family::Linear,
        beta0,
        beta1,
        beta2,
        beta3,
        encoding: design.encoding.clone(),
        diagnostics: Diagnostics::Linear { rmse, r2 },
        converged: true,
        iterations: 1,
        ridge: 0.0,
    })
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Penalized log-likelihood `Σ [y η − log(1 + e^η)] − λ/2 Σ_{j>0} β_j²`.
pub fn penalized_log_likelihood(
    design: &DMatrix<f64>,
    y01: &[f64],
    beta: &[f64],
    ridge: f64,
) -> f64 {
    let eta = design * DVector::from_column_slice(beta);
    let ll: f64 = eta.iter().zip(y01).map(|(e, y)| y * e - softplus(*e)).sum();
    ll - 0.5 * ridge * beta[1..].iter().map(|b| b * b).sum::<f64>()
}

/// Gradient of [`penalized_log_likelihood`].
pub fn penalized_gradient(
    design: &DMatrix<f64>,
    y01: &[f64],
    beta: &[f64],
    ridge: f64,
) -> Vec<f64> {
    let eta = design * DVector::from_column_slice(beta);
    let resid =
        DVector::from_iterator(y01.len(), eta.iter().zip(y01).map(|(e, y)| y - sigmoid(*e)));
    let mut g: Vec<f64> = (design.transpose() * resid).iter().cloned().collect();
    for j in 1..g.len() {
        g[j] -= ridge * beta[j];
    }
    g
}

fn newton_direction(h: DMatrix<f64>, g: &DVector<f64>) -> Result<DVector<f64>> {
    match h.clone().cholesky() {
        Some(c) => Ok(c.solve(g)),
        None => min_norm_solve(&h, g),
    }
}

/// Logistic regression on the interaction design for outcomes coded ±1.
pub fn fit_logistic(
    design: &EncodedDesign,
    t: &[bool],
    y: &[f64],
    ridge: f64,
) -> Result<FitResult> {
    check_shapes(design, t, y)?;
    let y01 = y
        .iter()
        .map(|&v| {
            if v == 1.0 {
                Ok(1.0)
            } else if v == -1.0 {
                Ok(0.0)
            } else {
                Err(Error::NonBinaryOutcome(v))
            }
        })
        .collect::<Result<Vec<f64>>>()?;
    let positives = y01.iter().filter(|&&v| v == 1.0).count();
    if positives == 0 || positives == y01.len() {
        return Err(Error::SingleClassTarget);
    }
    if !(ridge >= 0.0 && ridge.is_finite()) {
        return Err(Error::Numerical(format!("invalid ridge {ridge}")));
    }

    let full = interaction_design(&design.x, t);
    let (n, p) = full.shape();
    let mut beta = vec![0.0; p];
    let mut objective = penalized_log_likelihood(&full, &y01, &beta, ridge);
    let mut converged = false;
    let mut iterations = 0;
    for it in 1..=IRLS_MAX_ITERATIONS {
        iterations = it;
        let eta = &full * DVector::from_column_slice(&beta);
        let w: Vec<f64> = eta
            .iter()
            .map(|e| {
                let s = sigmoid(*e);
                s * (1.0 - s)
            })
            .collect();
        let mut h = DMatrix::zeros(p, p);
        for i in 0..n {
            let row = full.row(i);
            for a in 0..p {
                let ra = row[a] * w[i];
                if ra == 0.0 {
                    continue;
                }
                for b in a..p {
                    h[(a, b)] += ra * row[b];
                }
            }
        }
        for a in 0..p {
            for b in 0..a {
                h[(a, b)] = h[(b, a)];
            }
            if a > 0 {
                h[(a, a)] += ridge;
            }
        }
        let g = DVector::from_vec(penalized_gradient(&full, &y01, &beta, ridge));
        let dir = newton_direction(h, &g)?;

        let mut step = 1.0;
        let mut candidate: Vec<f64>;
        let mut cand_obj;
        loop {
            candidate = beta
                .iter()
                .zip(dir.iter())
                .map(|(b, d)| b + step * d)
                .collect();
            cand_obj = penalized_log_likelihood(&full, &y01, &candidate, ridge);
            if cand_obj >= objective - 1e-12 * objective.abs().max(1.0) || step < 1e-10 {
                break;
            }
            step *= 0.5;
        }
        let change = dir.iter().map(|d| (step * d).abs()).fold(0.0, f64::max);
        beta = candidate;
        objective = cand_obj;
        if change < IRLS_TOLERANCE {
            converged = true;
            break;
        }
    }

    let eta = &full * DVector::from_column_slice(&beta);
    let probs: Vec<f64> = eta.iter().map(|e| sigmoid(*e)).collect();
    let labels: Vec<bool> = y01.iter().map(|&v| v == 1.0).collect();
    let correct = probs
        .iter()
        .zip(&labels)
        .filter(|(p, l)| (**p >= 0.5) == **l)
        .count();
    let w = design.encoding.width();
    let (beta0, beta1, beta2, beta3) = split_coefficients(&beta, w);
    Ok(FitResult {
        family: Family::Logistic,
        beta0,
        beta1,
        beta2,
        beta3,
        encoding: design.encoding.clone(),
        diagnostics: Diagnostics::Logistic {
            auc: auc(&probs, &labels),
            accuracy: correct as f64 / n as f64,
        },
        converged,
        iterations,
        ridge,
    })
}

/// Area under the ROC curve by the rank-sum statistic, ties counted ½.
/// Returns 0.5 when either class is empty.
pub fn auc(scores: &[f64], labels: &[bool]) -> f64 {
    let n = scores.len();
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = n - pos;
    if pos == 0 || neg == 0 {
        return 0.5;
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            ranks[order[k]] = avg;
        }
        i = j + 1;
    }
    let rank_sum: f64 = ranks
        .iter()
        .zip(labels)
        .filter(|(_, &l)| l)
        .map(|(r, _)| r)
        .sum();
    let u = rank_sum - (pos * (pos + 1)) as f64 / 2.0;
    u / (pos as f64 * neg as f64)
}
