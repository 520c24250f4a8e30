//! Correlations, permutation tests and layerwise trajectory tables.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::io::{Manifest, Modality};

const MODULE: &str = "stats";

pub const DEFAULT_PERMUTATIONS: usize = 10_000;
pub const FMRI_CHANNEL_THRESHOLD: f64 = 0.2;
pub const ECOG_CHANNEL_THRESHOLD: f64 = 0.1;
pub const ALPHA: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Pearson,
    Spearman,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Pearson => "pearson",
            Method::Spearman => "spearman",
        })
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pearson" => Ok(Method::Pearson),
            "spearman" => Ok(Method::Spearman),
            _ => Err(Error::invalid(MODULE, format!("unknown correlation method {s:?}"))),
        }
    }
}

fn check_pair(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::invalid(MODULE, format!("series lengths differ: {} vs {}", x.len(), y.len())));
    }
    if x.len() < 3 {
        return Err(Error::invalid(MODULE, "need at least 3 paired values"));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::invalid(MODULE, "non-finite value in series"));
    }
    Ok(())
}

fn centered(x: &[f64]) -> (Vec<f64>, f64) {
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    let c: Vec<f64> = x.iter().map(|v| v - mean).collect();
    let ss = c.iter().map(|v| v * v).sum();
    (c, ss)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| p * q).sum()
}

pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(x, y)?;
    let (cx, sx) = centered(x);
    let (cy, sy) = centered(y);
    if sx == 0.0 || sy == 0.0 {
        return Err(Error::degenerate(MODULE, "zero variance series"));
    }
    Ok((dot(&cx, &cy) / (sx * sy).sqrt()).clamp(-1.0, 1.0))
}

/// 1-based ranks; tied values share the mean of their positions.
pub fn ranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut out = vec![0.0; x.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && x[order[j + 1]] == x[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &o in &order[i..=j] {
            out[o] = r;
        }
        i = j + 1;
    }
    out
}

pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(x, y)?;
    pearson(&ranks(x), &ranks(y))
}

pub fn correlate(x: &[f64], y: &[f64], method: Method) -> Result<f64> {
    match method {
        Method::Pearson => pearson(x, y),
        Method::Spearman => spearman(x, y),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationReport {
    pub method: Method,
    pub rho: f64,
    pub p_value: f64,
    pub n: usize,
    pub n_permutations: usize,
    pub seed: u64,
}

impl CorrelationReport {
    pub fn significant(&self) -> bool {
        self.p_value < ALPHA
    }
}

/// Two-sided test permuting `y`: p = (1 + #{|rho_perm| >= |rho_obs|}) / (1 + n_perm).
/// Permutation `i` draws from its own stream of the seeded generator, so the
/// result does not depend on the worker count.
pub fn permutation_test(x: &[f64], y: &[f64], method: Method, n_perm: usize, seed: u64) -> Result<CorrelationReport> {
    if n_perm == 0 {
        return Err(Error::invalid(MODULE, "need at least one permutation"));
    }
    check_pair(x, y)?;
    let (x, y) = match method {
        Method::Pearson => (x.to_vec(), y.to_vec()),
        Method::Spearman => (ranks(x), ranks(y)),
    };
    let (cx, sx) = centered(&x);
    let (cy, sy) = centered(&y);
    if sx == 0.0 || sy == 0.0 {
        return Err(Error::degenerate(MODULE, "zero variance series"));
    }
    let norm = (sx * sy).sqrt();
    let observed = (dot(&cx, &cy) / norm).clamp(-1.0, 1.0);
    // tolerance so permutations reproducing the observed value count as ties
    let bar = observed.abs() * (1.0 - 1e-12);
    let hits: usize = (0..n_perm)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64 + 1);
            let mut perm = cy.clone();
            perm.shuffle(&mut rng);
            usize::from((dot(&cx, &perm) / norm).abs() >= bar)
        })
        .sum();
    Ok(CorrelationReport {
        method,
        rho: observed,
        p_value: (1 + hits) as f64 / (1 + n_perm) as f64,
        n: x.len(),
        n_permutations: n_perm,
        seed,
    })
}

/// Layerwise quantities for one model; any of them may be absent.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LayerSeries {
    pub id: Option<f64>,
    pub norm_id: Option<f64>,
    pub surprisal: Option<f64>,
    pub norm_surprisal: Option<f64>,
    pub enc_r_mean: Option<f64>,
}

impl LayerSeries {
    fn merge(&mut self, other: &LayerSeries) {
        let take = |a: &mut Option<f64>, b: Option<f64>| {
            if b.is_some() {
                *a = b;
            }
        };
        take(&mut self.id, other.id);
        take(&mut self.norm_id, other.norm_id);
        take(&mut self.surprisal, other.surprisal);
        take(&mut self.norm_surprisal, other.norm_surprisal);
        take(&mut self.enc_r_mean, other.enc_r_mean);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub rows: Vec<(u32, LayerSeries)>,
    pub id_vs_ep: Option<CorrelationReport>,
    pub surprisal_vs_ep: Option<CorrelationReport>,
}

fn column(rows: &[(u32, LayerSeries)], name: &str, f: impl Fn(&LayerSeries) -> Option<f64>) -> Result<Option<Vec<f64>>> {
    let present = rows.iter().filter(|(_, s)| f(s).is_some()).count();
    if present == 0 {
        return Ok(None);
    }
    if present < rows.len() {
        let missing: Vec<String> = rows.iter().filter(|(_, s)| f(s).is_none()).map(|(l, _)| l.to_string()).collect();
        return Err(Error::invalid(
            MODULE,
            format!("{name} missing for layer(s) {}", missing.join(",")),
        ));
    }
    Ok(Some(rows.iter().map(|(_, s)| f(s).expect("checked")).collect()))
}

/// Spearman rho of I_d and of surprisal against mean encoding performance
/// across layers, each with a permutation p-value.
pub fn trajectory_table(series: &BTreeMap<u32, LayerSeries>, n_perm: usize, seed: u64) -> Result<Trajectory> {
    if series.len() < 3 {
        return Err(Error::invalid(MODULE, format!("{} layers; need at least 3", series.len())));
    }
    let rows: Vec<(u32, LayerSeries)> = series.iter().map(|(l, s)| (*l, *s)).collect();
    let ep = column(&rows, "encoding performance", |s| s.enc_r_mean)?
        .ok_or_else(|| Error::invalid(MODULE, "no encoding performance series"))?;
    let id = column(&rows, "intrinsic dimension", |s| s.id)?;
    let sur = column(&rows, "surprisal", |s| s.surprisal)?;
    let test = |x: Option<Vec<f64>>| -> Result<Option<CorrelationReport>> {
        x.map(|x| permutation_test(&x, &ep, Method::Spearman, n_perm, seed)).transpose()
    };
    Ok(Trajectory {
        id_vs_ep: test(id)?,
        surprisal_vs_ep: test(sur)?,
        rows,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelCorrelation {
    pub channel: String,
    /// Best encoding performance over layers.
    pub max_r: f64,
    /// None when the channel's layerwise performance is constant.
    pub rho: Option<f64>,
    pub included: bool,
}

/// Per-channel Spearman rho between layerwise I_d and that channel's
/// layerwise R. Channels whose best R reaches `threshold` are marked included.
pub fn per_channel_id_correlation(ids: &[f64], ep_by_layer: &[Vec<f64>], channels: &[String], threshold: f64) -> Result<Vec<ChannelCorrelation>> {
    if ids.len() != ep_by_layer.len() {
        return Err(Error::invalid(MODULE, "one encoding result per I_d layer required"));
    }
    if let Some(bad) = ep_by_layer.iter().find(|r| r.len() != channels.len()) {
        return Err(Error::invalid(
            MODULE,
            format!("layer has {} channels, expected {}", bad.len(), channels.len()),
        ));
    }
    let rank_ids = ranks(ids);
    let mut out = Vec::with_capacity(channels.len());
    for (c, name) in channels.iter().enumerate() {
        let r: Vec<f64> = ep_by_layer.iter().map(|l| l[c]).collect();
        let max_r = r.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let rho = match pearson(&rank_ids, &ranks(&r)) {
            Ok(v) => Some(v),
            Err(Error::Degenerate { .. }) => None,
            Err(e) => return Err(e),
        };
        out.push(ChannelCorrelation {
            channel: name.clone(),
            max_r,
            rho,
            included: max_r >= threshold,
        });
    }
    Ok(out)
}

pub fn default_threshold(modality: Modality) -> f64 {
    match modality {
        Modality::Ecog => ECOG_CHANNEL_THRESHOLD,
        _ => FMRI_CHANNEL_THRESHOLD,
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |e| Error::Table(format!("{}: {e}", path.display()))
}

/// One row per (model, layer).
pub fn write_trajectory_csv(models: &[ModelTrajectory], path: &Path) -> Result<()> {
    let err = csv_err(path);
    let mut w = csv::Writer::from_path(path).map_err(&err)?;
    w.write_record(["modality", "model", "layer", "id", "norm_id", "surprisal", "norm_surprisal", "enc_r_mean"])
        .map_err(&err)?;
    for m in models {
        for (l, s) in &m.trajectory.rows {
            w.write_record([
                modality_name(m.modality).to_string(),
                m.model.clone(),
                l.to_string(),
                opt(s.id),
                opt(s.norm_id),
                opt(s.surprisal),
                opt(s.norm_surprisal),
                opt(s.enc_r_mean),
            ])
            .map_err(&err)?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_channel_csv(rows: &[ChannelCorrelation], path: &Path) -> Result<()> {
    let err = csv_err(path);
    let mut w = csv::Writer::from_path(path).map_err(&err)?;
    w.write_record(["channel", "max_r", "rho", "included"]).map_err(&err)?;
    for r in rows {
        w.write_record([r.channel.clone(), r.max_r.to_string(), opt(r.rho), r.included.to_string()])
            .map_err(&err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// One model's trajectory within a modality.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelTrajectory {
    pub modality: Modality,
    pub model: String,
    pub trajectory: Trajectory,
}

pub fn modality_name(m: Modality) -> &'static str {
    match m {
        Modality::Fmri => "fmri",
        Modality::Ecog => "ecog",
        Modality::Synthetic => "synthetic",
    }
}

/// Rows {surprisal, I_d} x modality, one column triple per model:
/// rho, p-value and a `*` marker when p < 0.05.
pub fn write_table1_csv(models: &[ModelTrajectory], path: &Path) -> Result<()> {
    let mut names: Vec<&str> = Vec::new();
    for m in models {
        if !names.contains(&m.model.as_str()) {
            names.push(&m.model);
        }
    }
    let mut modalities: Vec<Modality> = Vec::new();
    for m in models {
        if !modalities.contains(&m.modality) {
            modalities.push(m.modality);
        }
    }
    let err = csv_err(path);
    let mut w = csv::Writer::from_path(path).map_err(&err)?;
    let mut header = vec!["quantity".to_string(), "modality".to_string()];
    for n in &names {
        header.push(n.to_string());
        header.push(format!("{n}_p"));
        header.push(format!("{n}_sig"));
    }
    w.write_record(&header).map_err(&err)?;
    type Pick = fn(&Trajectory) -> Option<&CorrelationReport>;
    let quantities: [(&str, Pick); 2] = [
        ("surprisal", |t| t.surprisal_vs_ep.as_ref()),
        ("id", |t| t.id_vs_ep.as_ref()),
    ];
    for (qname, pick) in quantities {
        for &modality in &modalities {
            let mut rec = vec![qname.to_string(), modality_name(modality).to_string()];
            for n in &names {
                let cell = models
                    .iter()
                    .find(|m| m.modality == modality && m.model == *n)
                    .and_then(|m| pick(&m.trajectory));
                match cell {
                    Some(r) => {
                        rec.push(r.rho.to_string());
                        rec.push(r.p_value.to_string());
                        rec.push(if r.significant() { "*" } else { "" }.to_string());
                    }
                    None => rec.extend(["".to_string(), "".to_string(), "".to_string()]),
                }
            }
            w.write_record(&rec).map_err(&err)?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// A layerwise result file as consumed by `stats table`.
#[derive(Debug, Clone, PartialEq)]
pub struct Profile {
    pub modality: Modality,
    pub model: String,
    pub layers: BTreeMap<u32, LayerSeries>,
    /// Per-channel R when the file is an encoding result.
    pub channels: Option<(Vec<String>, Vec<f64>)>,
}

fn parse_num(path: &Path, line: usize, s: &str) -> Result<Option<f64>> {
    if s.is_empty() {
        return Ok(None);
    }
    s.parse::<f64>()
        .map(Some)
        .map_err(|_| Error::Table(format!("{}:{line}: not a number: {s:?}", path.display())))
}

/// Reads one of: an I_d profile (`layer,k,id,...,chosen,...`; the chosen row
/// counts), an encoding result (`channel,r,...`; layer taken from its
/// manifest), a surprisal report (`layer,mean_surprisal,normalized`), or a
/// trajectory CSV (`layer` plus any of id, norm_id, surprisal,
/// norm_surprisal, enc_r_mean).
pub fn read_profile(path: &Path) -> Result<Profile> {
    let manifest = Manifest::read(path)?.unwrap_or_default();
    let mut rdr = csv::Reader::from_path(path).map_err(|e| match e.kind() {
        csv::ErrorKind::Io(io) if io.kind() == std::io::ErrorKind::NotFound => Error::NotFound(path.to_path_buf()),
        _ => Error::Table(format!("{}: {e}", path.display())),
    })?;
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::Table(format!("{}: {e}", path.display())))?
        .iter()
        .map(str::to_string)
        .collect();
    let col = |name: &str| header.iter().position(|h| h == name);
    let mut layers: BTreeMap<u32, LayerSeries> = BTreeMap::new();
    let mut channels = None;
    let records: Vec<csv::StringRecord> = rdr
        .records()
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::Table(format!("{}: {e}", path.display())))?;
    let layer_of = |rec: &csv::StringRecord, line: usize, c: usize| -> Result<u32> {
        rec[c]
            .parse()
            .map_err(|_| Error::Table(format!("{}:{line}: bad layer {:?}", path.display(), &rec[c])))
    };
    if let (Some(ch), Some(rc)) = (col("channel"), col("r")) {
        let mut ids = Vec::new();
        let mut rs = Vec::new();
        for (i, rec) in records.iter().enumerate() {
            ids.push(rec[ch].to_string());
            rs.push(parse_num(path, i + 2, &rec[rc])?.unwrap_or(f64::NAN));
        }
        if rs.is_empty() || rs.iter().any(|r| !r.is_finite()) {
            return Err(Error::Table(format!("{}: missing channel correlations", path.display())));
        }
        let mean = rs.iter().sum::<f64>() / rs.len() as f64;
        layers.insert(manifest.layer, LayerSeries { enc_r_mean: Some(mean), ..Default::default() });
        channels = Some((ids, rs));
    } else if let (Some(lc), Some(chosen), Some(idc)) = (col("layer"), col("chosen"), col("id")) {
        for (i, rec) in records.iter().enumerate() {
            if rec[chosen].trim() == "1" || rec[chosen].trim() == "true" {
                let layer = layer_of(rec, i + 2, lc)?;
                let id = parse_num(path, i + 2, &rec[idc])?;
                let ambient = manifest.extra.get("ambient_dim").and_then(|v| v.parse::<usize>().ok());
                let norm_id = match (col("norm_id"), id, ambient) {
                    (Some(c), _, _) => parse_num(path, i + 2, &rec[c])?,
                    (None, Some(v), Some(d)) if d >= 2 => Some(v / (d as f64).ln()),
                    _ => None,
                };
                layers.insert(layer, LayerSeries { id, norm_id, ..Default::default() });
            }
        }
    } else if let Some(lc) = col("layer") {
        let get = |rec: &csv::StringRecord, line: usize, names: &[&str]| -> Result<Option<f64>> {
            for n in names {
                if let Some(c) = col(n) {
                    return parse_num(path, line, &rec[c]);
                }
            }
            Ok(None)
        };
        for (i, rec) in records.iter().enumerate() {
            let line = i + 2;
            let s = LayerSeries {
                id: get(rec, line, &["id"])?,
                norm_id: get(rec, line, &["norm_id"])?,
                surprisal: get(rec, line, &["surprisal", "mean_surprisal"])?,
                norm_surprisal: get(rec, line, &["norm_surprisal", "normalized"])?,
                enc_r_mean: get(rec, line, &["enc_r_mean"])?,
            };
            layers.entry(layer_of(rec, line, lc)?).or_default().merge(&s);
        }
    } else {
        return Err(Error::Table(format!("{}: unrecognised profile columns {header:?}", path.display())));
    }
    Ok(Profile {
        modality: manifest.modality,
        model: manifest.model,
        layers,
        channels,
    })
}

/// Merges profiles into one layer map per (modality, model), in first-seen order.
pub fn merge_profiles(profiles: &[Profile]) -> Vec<(Modality, String, BTreeMap<u32, LayerSeries>)> {
    let mut out: Vec<(Modality, String, BTreeMap<u32, LayerSeries>)> = Vec::new();
    for p in profiles {
        let idx = match out.iter().position(|(m, n, _)| *m == p.modality && *n == p.model) {
            Some(i) => i,
            None => {
                out.push((p.modality, p.model.clone(), BTreeMap::new()));
                out.len() - 1
            }
        };
        for (l, s) in &p.layers {
            out[idx].2.entry(*l).or_default().merge(s);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pearson_extremes() {
        let x = [1.0, 2.0, 3.0, 5.0];
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0).collect();
        assert!((pearson(&x, &y).unwrap() - 1.0).abs() < 1e-15);
        let y: Vec<f64> = x.iter().map(|v| -v).collect();
        assert!((pearson(&x, &y).unwrap() + 1.0).abs() < 1e-15);
        assert!(pearson(&x, &[1.0; 4]).is_err());
        assert!(pearson(&x[..2], &x[..2]).is_err());
    }

    #[test]
    fn pearson_high_precision() {
        // integer data: exact sums in i128
        let x: Vec<i64> = (0..50).map(|i| (i * 7919) % 101 - 50).collect();
        let y: Vec<i64> = (0..50).map(|i| (i * 104729) % 97 - 48).collect();
        let n = x.len() as i128;
        let sx: i128 = x.iter().map(|&v| v as i128).sum();
        let sy: i128 = y.iter().map(|&v| v as i128).sum();
        let sxy: i128 = x.iter().zip(&y).map(|(&a, &b)| a as i128 * b as i128).sum();
        let sxx: i128 = x.iter().map(|&v| (v as i128).pow(2)).sum();
        let syy: i128 = y.iter().map(|&v| (v as i128).pow(2)).sum();
        let num = (n * sxy - sx * sy) as f64;
        let den = (((n * sxx - sx * sx) as f64) * ((n * syy - sy * sy) as f64)).sqrt();
        let xf: Vec<f64> = x.iter().map(|&v| v as f64).collect();
        let yf: Vec<f64> = y.iter().map(|&v| v as f64).collect();
        assert!((pearson(&xf, &yf).unwrap() - num / den).abs() < 1e-12);
    }

    #[test]
    fn average_ranks() {
        assert_eq!(ranks(&[1.0, 2.0, 2.0, 4.0]), [1.0, 2.5, 2.5, 4.0]);
        assert_eq!(ranks(&[3.0, 1.0, 2.0]), [3.0, 1.0, 2.0]);
        let x = [1.0, 2.0, 2.0, 4.0];
        let y = [1.0, 3.0, 3.0, 9.0];
        let oracle = pearson(&ranks(&x), &ranks(&y)).unwrap();
        assert_eq!(spearman(&x, &y).unwrap(), oracle);
        assert!((oracle - 1.0).abs() < 1e-15);
    }

    #[test]
    fn spearman_monotone_and_reversal() {
        let x: Vec<f64> = (0..10).map(|i| i as f64 * 0.7).collect();
        let y: Vec<f64> = x.iter().map(|v| v.exp()).collect();
        assert!((spearman(&x, &y).unwrap() - 1.0).abs() < 1e-15);
        let z = [3.0, 1.0, 4.0, 1.5, 5.0, 9.0, 2.0, 6.0, 5.5, 3.5];
        let rev: Vec<f64> = z.iter().map(|v| -v).collect();
        assert!((spearman(&x, &z).unwrap() + spearman(&x, &rev).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn monotone_length_12_is_significant() {
        let x: Vec<f64> = (0..12).map(|i| i as f64).collect();
        let r = permutation_test(&x, &x, Method::Spearman, 10_000, 3).unwrap();
        assert!(r.p_value <= 0.001, "{}", r.p_value);
        assert_eq!(r.rho, 1.0);
        assert!(permutation_test(&x, &x, Method::Spearman, 0, 3).is_err());
    }

    #[test]
    fn p_value_bounds() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y = [2.0, 1.0, 4.0, 3.0];
        let r = permutation_test(&x, &y, Method::Pearson, 50, 0).unwrap();
        assert!(r.p_value > 0.0 && r.p_value <= 1.0);
        let again = permutation_test(&x, &y, Method::Pearson, 50, 0).unwrap();
        assert_eq!(r, again);
    }

    fn series(values: &[(f64, f64)]) -> BTreeMap<u32, LayerSeries> {
        values
            .iter()
            .enumerate()
            .map(|(l, &(id, ep))| {
                (
                    l as u32,
                    LayerSeries {
                        id: Some(id),
                        enc_r_mean: Some(ep),
                        ..Default::default()
                    },
                )
            })
            .collect()
    }

    #[test]
    fn trajectory_monotone_transform() {
        let s = series(&[(1.0, 0.1), (3.0, 0.25), (2.0, 0.2), (5.0, 0.4), (4.0, 0.3)]);
        let t = trajectory_table(&s, 1000, 1).unwrap();
        assert_eq!(t.id_vs_ep.unwrap().rho, 1.0);
        assert!(t.surprisal_vs_ep.is_none());
        assert!(trajectory_table(&series(&[(1.0, 0.1), (2.0, 0.2)]), 10, 1).is_err());
    }

    #[test]
    fn trajectory_missing_layer() {
        let mut s = series(&[(1.0, 0.1), (3.0, 0.25), (2.0, 0.2)]);
        s.get_mut(&1).unwrap().id = None;
        let err = trajectory_table(&s, 10, 1).unwrap_err();
        assert!(err.to_string().contains("layer(s) 1"));
    }

    #[test]
    fn per_channel_thresholds() {
        let ids = [1.0, 2.0, 3.0];
        let ep = vec![vec![0.1, 0.05, 0.3], vec![0.2, 0.05, 0.2], vec![0.3, 0.05, 0.1]];
        let names: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        let out = per_channel_id_correlation(&ids, &ep, &names, FMRI_CHANNEL_THRESHOLD).unwrap();
        assert_eq!(out[0].rho, Some(1.0));
        assert_eq!(out[1].rho, None);
        assert_eq!(out[2].rho, Some(-1.0));
        assert_eq!(out.iter().map(|c| c.included).collect::<Vec<_>>(), [true, false, true]);
        assert_eq!(default_threshold(Modality::Ecog), 0.1);
        assert_eq!(default_threshold(Modality::Fmri), 0.2);
    }

    #[test]
    fn profile_formats() {
        let dir = tempfile::tempdir().unwrap();
        let idp = dir.path().join("id.csv");
        std::fs::write(&idp, "layer,k,id,stderr,chosen,bootstrap_mean,bootstrap_sd\n3,1,5.0,0.1,0,,\n3,2,6.0,0.1,1,6.1,0.2\n").unwrap();
        let p = read_profile(&idp).unwrap();
        assert_eq!(p.layers[&3].id, Some(6.0));
        let enc = dir.path().join("enc.csv");
        std::fs::write(&enc, "channel,r,best_lag,alpha\nv0,0.2,,10\nv1,0.4,,10\n").unwrap();
        Manifest { layer: 3, ..Default::default() }.write(&enc).unwrap();
        let q = read_profile(&enc).unwrap();
        assert!((q.layers[&3].enc_r_mean.unwrap() - 0.3).abs() < 1e-15);
        let merged = merge_profiles(&[p, q]);
        assert_eq!(merged.len(), 1);
        assert_eq!(merged[0].2[&3].id, Some(6.0));
        let sur = dir.path().join("s.csv");
        std::fs::write(&sur, "layer,mean_surprisal,normalized\n0,4.0,0.5\n").unwrap();
        assert_eq!(read_profile(&sur).unwrap().layers[&0].norm_surprisal, Some(0.5));
        assert!(matches!(read_profile(&dir.path().join("nope.csv")), Err(Error::NotFound(_))));
    }
}
