use std::f64::consts::PI;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::*;
use crate::lattice::LatticeModel;
use crate::modes::{self, ModesError, Residual};
use crate::propagation::{self, GrowthClassification, Method, PropagationError, PropagationTrace};
use crate::scattering::{self, ScatteringError, SpectralFeature};
use crate::spectrum::{self, BreakingCriterion, ModelFamily, SpectrumError, SpectrumReport};

/// Margin kept between the light cone of the truncation edges and the
/// sites compared against closed-form solutions.
const CAUSAL_MARGIN: f64 = 40.0;

/// Sites added to `2·z_max` when sizing a propagation window.
const LIGHT_CONE_MARGIN: f64 = 20.0;

fn csv_err(e: csv::Error) -> CliError {
    config(format!("write failed: {e}"))
}

fn family(args: &ModelArgs) -> Result<ModelFamily, CliError> {
    match args.kind()? {
        ModelKind::A { delta } => Ok(ModelFamily::A {
            delta,
            half_width: args.half_width(),
        }),
        ModelKind::B => Ok(ModelFamily::B {
            half_width: args.half_width(),
        }),
        ModelKind::Custom(_) => Err(config("a gain family needs model a or b")),
    }
}

fn spectrum_failure(e: SpectrumError) -> CliError {
    match e {
        SpectrumError::Lattice(e) => config(e),
        SpectrumError::BadGrid => config(e),
        other => numeric(other),
    }
}

#[derive(Serialize)]
struct StateRow {
    index: usize,
    #[serde(rename = "re_E")]
    re_e: f64,
    #[serde(rename = "im_E")]
    im_e: f64,
    class: &'static str,
    loc_kind: &'static str,
    loc_param: Option<f64>,
    tail_mass: f64,
    residual: f64,
}

#[derive(Serialize)]
struct SpectrumJson {
    g: Option<f64>,
    #[serde(rename = "N")]
    half_width: usize,
    is_pt_broken: bool,
    states: Vec<StateRow>,
}

fn spectrum_json(g: Option<f64>, r: &SpectrumReport) -> SpectrumJson {
    SpectrumJson {
        g,
        half_width: r.half_width,
        is_pt_broken: r.is_pt_broken,
        states: r
            .states
            .iter()
            .enumerate()
            .map(|(index, s)| {
                let p = s.localization.kind.parameter();
                StateRow {
                    index,
                    re_e: s.pair.energy.re,
                    im_e: s.pair.energy.im,
                    class: s.class.name(),
                    loc_kind: s.localization.kind.name(),
                    loc_param: p.is_finite().then_some(p),
                    tail_mass: s.localization.tail_mass,
                    residual: s.pair.residual,
                }
            })
            .collect(),
    }
}

pub fn spectrum(a: SpectrumArgs) -> Result<(), CliError> {
    let rows: Vec<(f64, SpectrumReport)> = if let ModelKind::Custom(_) = a.model.kind()? {
        if a.g.is_some() || a.g_range.is_some() {
            return Err(config("custom lattices take no --g or --g-range"));
        }
        let model = a.model.build(None)?;
        vec![(
            f64::NAN,
            spectrum::analyze(&model).map_err(spectrum_failure)?,
        )]
    } else {
        let grid = match (&a.g_range, a.g) {
            (Some(r), _) => parse_grid(r)?,
            (None, Some(g)) => vec![g],
            (None, None) => return Err(config("give --g or --g-range")),
        };
        let fam = family(&a.model)?;
        for &g in &grid {
            fam.build(g).map_err(config)?;
        }
        spectrum::spectrum_scan(fam, &grid, a.out.threads.max(1)).map_err(|e| match e {
            SpectrumError::ScanPoint { g, source } => numeric(format!("at g = {g}: {source}")),
            other => spectrum_failure(other),
        })?
    };
    let out = open_output(&a.out.output)?;
    match a.out.format {
        Format::Csv => spectrum::write_scan_csv(&rows, out).map_err(csv_err),
        Format::Json => {
            let json: Vec<SpectrumJson> = rows
                .iter()
                .map(|(g, r)| spectrum_json(g.is_finite().then_some(*g), r))
                .collect();
            write_json(&json, out)
        }
    }
}

fn criterion(c: CriterionArg) -> BreakingCriterion {
    match c {
        CriterionArg::Auto => BreakingCriterion::Auto,
        CriterionArg::Truncated => BreakingCriterion::TruncatedSpectrum,
        CriterionArg::Radiating => BreakingCriterion::RadiatingBoundary,
    }
}

#[derive(Serialize)]
struct ThresholdJson {
    kind: &'static str,
    #[serde(flatten)]
    report: spectrum::ThresholdReport,
}

pub fn threshold(a: ThresholdArgs) -> Result<(), CliError> {
    positive("tol", a.tol)?;
    let fam = family(&a.model)?;
    let crit = criterion(a.criterion);
    let (report, kind) = match (a.kind, fam) {
        (ThresholdKind::Pt, fam) => {
            let (lo, hi) = match fam {
                ModelFamily::A { .. } => (0.0, 2.0),
                ModelFamily::B { .. } => (0.5, 1.5),
            };
            let (lo, hi) = (a.g_lo.unwrap_or(lo), a.g_hi.unwrap_or(hi));
            fam.build(lo).and_then(|_| fam.build(hi)).map_err(config)?;
            (spectrum::find_threshold(fam, lo, hi, a.tol, crit), "pt")
        }
        (ThresholdKind::Boc, ModelFamily::A { delta, half_width }) => {
            let (lo, hi) = (a.g_lo.unwrap_or(0.05), a.g_hi.unwrap_or(0.7));
            fam.build(lo).and_then(|_| fam.build(hi)).map_err(config)?;
            (
                spectrum::find_boc_disappearance(delta, half_width, lo, hi, a.tol, crit),
                "boc",
            )
        }
        (ThresholdKind::Boc, ModelFamily::B { .. }) => {
            return Err(config("--kind boc applies to model a"))
        }
    };
    let report = report.map_err(spectrum_failure)?;
    let mut out = open_output(&a.out.output)?;
    match a.out.format {
        Format::Json => write_json(&ThresholdJson { kind, report }, out),
        Format::Csv => {
            let crit = serde_json::to_value(report.criterion).expect("enum serializes");
            writeln!(
                out,
                "g_th,N,tol,criterion,kind\n{},{},{},{},{}",
                crate::fmt_num(report.g_th),
                report.half_width,
                crate::fmt_num(report.tol),
                crit.as_str().unwrap_or_default(),
                kind
            )
            .and_then(|_| out.flush())
            .map_err(|e| config(format!("write failed: {e}")))
        }
    }
}

#[derive(Serialize)]
struct TransmitRow {
    q_over_pi: f64,
    #[serde(rename = "T")]
    transmittance: Option<f64>,
    re_t: Option<f64>,
    im_t: Option<f64>,
    re_r: Option<f64>,
    im_r: Option<f64>,
    singular: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    analytic: Option<AnalyticColumns>,
}

#[derive(Serialize)]
struct AnalyticColumns {
    #[serde(rename = "T")]
    transmittance: Option<f64>,
    re_t: Option<f64>,
    im_t: Option<f64>,
}

#[derive(Serialize)]
struct TransmitJson {
    points: Vec<TransmitRow>,
    feature: Option<SpectralFeatureJson>,
}

#[derive(Serialize)]
struct SpectralFeatureJson {
    #[serde(flatten)]
    feature: SpectralFeature,
    q_loc_over_pi: f64,
}

pub fn transmit(a: TransmitArgs) -> Result<(), CliError> {
    let kind = a.model.kind()?;
    let analytic = match (a.analytic, &kind) {
        (false, _) => None,
        (true, ModelKind::A { delta }) => Some((*delta, a.g.unwrap_or(f64::NAN))),
        (true, _) => return Err(config("--analytic applies to model a")),
    };
    let model = a.model.build(a.g)?;
    let grid: Vec<f64> = match &a.q_range {
        Some(r) => {
            let g = parse_grid(r)?;
            if g.iter().any(|&x| !(x > 0.0 && x < 1.0)) {
                return Err(config("--q-range must lie strictly inside (0, 1)"));
            }
            g.into_iter().map(|x| x * PI).collect()
        }
        None if a.q_points == 0 => return Err(config("wavenumber grid is empty")),
        None => scattering::interior_grid(a.q_points),
    };
    let points = scattering::transmittance_scan(&model, &grid, a.core, a.out.threads.max(1))
        .map_err(|e| match e {
            ScatteringError::CoreTooSmall { .. }
            | ScatteringError::EmptyGrid
            | ScatteringError::WavenumberOutOfRange(_) => config(e),
            other => numeric(other),
        })?;
    let out = open_output(&a.out.output)?;
    match a.out.format {
        Format::Csv => scattering::write_scan_csv(&points, analytic, out).map_err(csv_err),
        Format::Json => {
            let finite = |x: f64| x.is_finite().then_some(x);
            let rows = points
                .iter()
                .map(|p| {
                    let ok = p.result.as_ref().ok();
                    TransmitRow {
                        q_over_pi: p.q / PI,
                        transmittance: ok.map(|s| s.transmittance),
                        re_t: ok.map(|s| s.t.re),
                        im_t: ok.map(|s| s.t.im),
                        re_r: ok.map(|s| s.r.re),
                        im_r: ok.map(|s| s.r.im),
                        singular: ok.is_none(),
                        analytic: analytic.map(|(delta, g)| {
                            match scattering::transmission_model_a_analytic(delta, g, p.q) {
                                Ok(t) => {
                                    let t = t * Complex64::from_polar(1.0, -2.0 * p.q);
                                    AnalyticColumns {
                                        transmittance: finite(t.norm_sqr()),
                                        re_t: finite(t.re),
                                        im_t: finite(t.im),
                                    }
                                }
                                Err(_) => AnalyticColumns {
                                    transmittance: None,
                                    re_t: None,
                                    im_t: None,
                                },
                            }
                        }),
                    }
                })
                .collect();
            let (qs, ts): (Vec<f64>, Vec<f64>) = points
                .iter()
                .filter_map(|p| p.result.as_ref().ok().map(|s| (p.q, s.transmittance)))
                .unzip();
            let feature = scattering::find_spectral_feature(&qs, &ts)
                .ok()
                .map(|feature| SpectralFeatureJson {
                    q_loc_over_pi: feature.q_loc / PI,
                    feature,
                });
            write_json(
                &TransmitJson {
                    points: rows,
                    feature,
                },
                out,
            )
        }
    }
}

#[derive(Deserialize)]
struct StateRecord {
    n: i64,
    re_c: f64,
    im_c: f64,
}

fn read_state(path: &Path, half_width: usize) -> Result<Vec<Complex64>, CliError> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| config(format!("cannot read {}: {e}", path.display())))?;
    let mut c = vec![Complex64::default(); 2 * half_width + 1];
    let w = half_width as i64;
    for rec in reader.deserialize::<StateRecord>() {
        let rec = rec.map_err(|e| config(format!("{}: {e}", path.display())))?;
        if rec.n.abs() > w {
            return Err(config(format!(
                "{}: site {} outside the window -{w}..={w}",
                path.display(),
                rec.n
            )));
        }
        c[(rec.n + w) as usize] = Complex64::new(rec.re_c, rec.im_c);
    }
    Ok(c)
}

#[derive(Serialize, Clone, Copy)]
struct JordanCheck {
    eps: f64,
    /// Largest `|c_n(z) - c_n^closed(z)|` over sites outside the edge light cone.
    max_deviation: f64,
    /// Last z at which any site was compared.
    z_checked: f64,
}

fn jordan_check(trace: &PropagationTrace, eps: f64) -> Result<JordanCheck, CliError> {
    let w = trace.half_width as f64;
    let mut max_deviation: f64 = 0.0;
    let mut z_checked = 0.0;
    for (z, state) in trace.z.iter().zip(&trace.states) {
        let reach = w - 2.0 * z - CAUSAL_MARGIN;
        if reach < 0.0 {
            break;
        }
        let exact = modes::jordan_family(eps, *z, trace.half_width).map_err(config)?;
        let r = reach.floor() as i64;
        for n in -r..=r {
            let i = (n + trace.half_width as i64) as usize;
            max_deviation = max_deviation.max((state[i] - exact[i]).norm());
        }
        z_checked = *z;
    }
    Ok(JordanCheck {
        eps,
        max_deviation,
        z_checked,
    })
}

#[derive(Serialize)]
struct PowerRow {
    z: f64,
    #[serde(rename = "P")]
    power: f64,
    #[serde(rename = "P_over_P0")]
    ratio: f64,
}

#[derive(Serialize)]
struct PropagateJson {
    #[serde(rename = "N")]
    half_width: usize,
    g: Option<f64>,
    method: Method,
    z_max: f64,
    z_reached: f64,
    growth: Option<GrowthClassification>,
    jordan_check: Option<JordanCheck>,
    power: Vec<PowerRow>,
}

fn resolve_gain(a: &PropagateArgs) -> Result<Option<f64>, CliError> {
    let kind = a.model.kind()?;
    match (a.g, a.g_rel, &kind) {
        (_, _, ModelKind::Custom(_)) => {
            if a.g.is_some() || a.g_rel.is_some() {
                Err(config("custom lattices take no --g or --g-rel"))
            } else {
                Ok(None)
            }
        }
        (Some(g), None, _) => Ok(Some(g)),
        (None, Some(rel), ModelKind::A { delta }) => {
            positive("g-rel", rel)?;
            let fam = ModelFamily::A {
                delta: *delta,
                half_width: a.model.half_width(),
            };
            let th = spectrum::find_threshold(
                fam,
                0.0,
                3.0,
                1e-10,
                BreakingCriterion::RadiatingBoundary,
            )
            .map_err(spectrum_failure)?;
            Ok(Some(rel * th.g_th))
        }
        // model b breaks symmetry at unit gain
        (None, Some(rel), ModelKind::B) => Ok(Some(positive("g-rel", rel)?)),
        (None, None, _) => Err(config("give --g or --g-rel")),
        (Some(_), Some(_), _) => Err(config("--g and --g-rel are exclusive")),
    }
}

/// Smallest half width keeping the edges outside the light cone of a
/// single-site excitation up to `z_max`.
fn light_cone_sites(z_max: f64) -> usize {
    (2.0 * z_max + LIGHT_CONE_MARGIN).ceil() as usize
}

pub fn propagate(mut a: PropagateArgs) -> Result<(), CliError> {
    positive("z-max", a.z_max)?;
    positive("dz", a.dz)?;
    a.model.sites = a.model.sites.or(Some(light_cone_sites(a.z_max)));
    let g = resolve_gain(&a)?;
    let model = a.model.build(g)?;
    let n = model.half_width();
    if n < light_cone_sites(a.z_max) {
        eprintln!(
            "warning: N = {n} is inside the light cone (needs {}); edge reflections reach the centre before z = {}",
            light_cone_sites(a.z_max),
            a.z_max
        );
    }
    let is_b = matches!(a.model.kind()?, ModelKind::B);
    let c0 = if let Some(path) = &a.c0_file {
        read_state(path, n)?
    } else if let Some(eps) = a.jordan_seed {
        if !is_b || g != Some(1.0) {
            return Err(config("--jordan-seed needs model b at g = 1"));
        }
        modes::jordan_family(finite("jordan-seed", eps)?, 0.0, n).map_err(config)?
    } else {
        let site = a.excite.unwrap_or(0);
        propagation::site_excitation(n, site)
            .ok_or_else(|| config(format!("--excite {site} is outside the window")))?
    };
    if a.check_jordan.is_some() && (!is_b || g != Some(1.0)) {
        return Err(config("--check-jordan needs model b at g = 1"));
    }
    let method = match a.method {
        MethodArg::Expm => Method::MatrixExponential,
        MethodArg::Rk => Method::AdaptiveRk,
    };
    let (trace, failure) = match propagation::propagate(&model, &c0, a.z_max, a.dz, method) {
        Ok(t) => (t, None),
        Err(PropagationError::Overflow { z_reached, trace }) => (
            *trace,
            Some(numeric(format!(
                "norm overflow, stopped at z = {z_reached}"
            ))),
        ),
        Err(
            e @ (PropagationError::BadInitialState
            | PropagationError::Dimension { .. }
            | PropagationError::BadRange { .. }),
        ) => return Err(config(e)),
        Err(e) => return Err(numeric(e)),
    };
    let growth = match propagation::classify_growth(&trace.power, &trace.z, a.window_frac) {
        Ok(g) => Some(g),
        Err(PropagationError::BadWindow(_)) => {
            return Err(config("--window-frac must lie in [0, 1)"))
        }
        Err(e @ PropagationError::TooFewSamples { .. }) if a.growth.is_none() => {
            eprintln!("warning: no growth classification: {e}");
            None
        }
        Err(e) if failure.is_none() => {
            return Err(match e {
                PropagationError::TooFewSamples { .. } => config(e),
                other => numeric(other),
            })
        }
        Err(_) => None,
    };
    let check = a
        .check_jordan
        .map(|eps| jordan_check(&trace, eps))
        .transpose()?;
    if let Some(c) = &check {
        eprintln!(
            "secular solution check: max deviation {:e} up to z = {}",
            c.max_deviation, c.z_checked
        );
    }

    if let Some(path) = &a.trace {
        let f = create(path)?;
        propagation::write_trace_csv(&trace, f).map_err(csv_err)?;
    }
    if let Some(path) = &a.growth {
        write_json(&growth, create(path)?)?;
    }
    let out = open_output(&a.out.output)?;
    match a.out.format {
        Format::Csv => propagation::write_power_csv(&trace, out).map_err(csv_err)?,
        Format::Json => {
            let p0 = trace.power[0];
            write_json(
                &PropagateJson {
                    half_width: n,
                    g,
                    method,
                    z_max: a.z_max,
                    z_reached: *trace.z.last().expect("non-empty"),
                    growth,
                    jordan_check: check,
                    power: trace
                        .z
                        .iter()
                        .zip(&trace.power)
                        .map(|(&z, &p)| PowerRow {
                            z,
                            power: p,
                            ratio: p / p0,
                        })
                        .collect(),
                },
                out,
            )?
        }
    }
    failure.map_or(Ok(()), Err)
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| config(format!("cannot create {}: {e}", path.display())))
}

#[derive(Serialize)]
struct AmplitudeRow {
    n: i64,
    re_c: f64,
    im_c: f64,
    abs_c: f64,
}

#[derive(Serialize)]
struct BicJson {
    g: f64,
    #[serde(rename = "N")]
    half_width: usize,
    normalization: modes::Normalization,
    residual: Residual,
    amplitudes: Vec<AmplitudeRow>,
}

fn modes_failure(e: ModesError) -> CliError {
    config(e)
}

pub fn bic(a: BicArgs) -> Result<(), CliError> {
    match a.model.model.as_deref() {
        None | Some("b") => {}
        Some(_) => return Err(config("bic works on model b only")),
    }
    let n = a.model.half_width();
    if a.check_exceptional {
        let r = modes::exceptional_point_check(a.g, n).map_err(modes_failure)?;
        let mut out = open_output(&a.out.output)?;
        return match a.out.format {
            Format::Json => write_json(&r, out),
            Format::Csv => writeln!(
                out,
                "g,N,interior,boundary,deviation_at_origin,holds\n{},{},{},{},{},{}",
                crate::fmt_num(r.g),
                r.half_width,
                crate::fmt_num(r.residual.interior),
                crate::fmt_num(r.residual.boundary),
                crate::fmt_num(r.deviation_at_origin),
                r.holds
            )
            .and_then(|_| out.flush())
            .map_err(|e| config(format!("write failed: {e}"))),
        };
    }
    let h = LatticeModel::model_b(positive("g", a.g)?, n)
        .map_err(config)?
        .hamiltonian();
    let (amplitudes, residual, normalization) = if let Some(eps) = a.jordan_seed {
        if a.g != 1.0 {
            return Err(config("--jordan-seed needs --g 1"));
        }
        let c = modes::jordan_family(finite("jordan-seed", eps)?, 0.0, n).map_err(modes_failure)?;
        let r = modes::jordan_equation_residual(eps, 0.0, 0.5, n).map_err(modes_failure)?;
        (c, r, modes::Normalization::Raw)
    } else {
        let mut mode = modes::type2_bic_closed_form(a.g, n).map_err(modes_failure)?;
        if a.normalize {
            mode = mode.normalized();
        }
        let r = modes::residual(&h, &mode).map_err(modes_failure)?;
        (mode.amplitudes().to_vec(), r, mode.normalization)
    };
    eprintln!(
        "residual: interior {:e}, boundary {:e}",
        residual.interior, residual.boundary
    );
    let out = open_output(&a.out.output)?;
    match a.out.format {
        Format::Csv => modes::write_mode_csv(&amplitudes, out).map_err(csv_err),
        Format::Json => write_json(
            &BicJson {
                g: a.g,
                half_width: n,
                normalization,
                residual,
                amplitudes: amplitudes
                    .iter()
                    .enumerate()
                    .map(|(i, c)| AmplitudeRow {
                        n: i as i64 - n as i64,
                        re_c: c.re,
                        im_c: c.im,
                        abs_c: c.norm(),
                    })
                    .collect(),
            },
            out,
        ),
    }
}
