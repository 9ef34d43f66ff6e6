//! One runner per experiment. Runners compute everything in memory; nothing
//! touches the output directory until the caller writes the [`Outcome`].

use std::fmt::Write as _;

use anyhow::Result;
use qlab_core::conformal_ops::{
    bilaplacian, bilaplacian_probe, paneitz_functional_radial, q_curvature_tensorial_exact,
    radial_laplacian, ExactCurvatureData,
};
use qlab_core::mobius::{
    estimate_poincare_exponent, orbit_integral, poincare_partial_sum, OrbitParams, SeriesField,
    SingularSet,
};
use qlab_core::moving_plane::{
    asymptotic_sign_region, ball_convexity, find_lambda_star, fit_far_field, Convexity,
    NegLaplacian, PlaneScan,
};
use qlab_core::quadrature::sphere_area;
use qlab_core::radial_blowup::{iterate_lower_bounds, simulate_lower_system};
use qlab_core::rescale::{bubble_match, equation_invariance_check, find_peak, window_samples, RescaleJob};
use qlab_core::{
    Bubble, ConformalExponents, FnField, GridField, QMode, RadialField, ScalarField, SchottkyGroup,
};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::*;

#[derive(Debug, Clone, Serialize)]
pub struct Assertion {
    pub group: String,
    pub pass: bool,
    /// A documented failure that does not affect the exit status.
    pub expected_fail: bool,
    pub detail: String,
}

impl Assertion {
    fn new(group: &str, pass: bool, detail: String) -> Self {
        Self { group: group.into(), pass, expected_fail: false, detail }
    }

    fn expected_fail(group: &str, pass: bool, detail: String) -> Self {
        Self { group: group.into(), pass, expected_fail: !pass, detail }
    }

    /// Fails the run.
    pub fn is_failure(&self) -> bool {
        !self.pass && !self.expected_fail
    }

    pub fn summary(&self) -> String {
        let status = match (self.pass, self.expected_fail) {
            (true, _) => "PASS",
            (false, true) => "FAIL (expected)",
            (false, false) => "FAIL",
        };
        format!("{status} {}: {}", self.group, self.detail)
    }
}

pub struct Outcome {
    pub assertions: Vec<Assertion>,
    pub result: Value,
    /// Extra artifacts as (file name, contents).
    pub files: Vec<(String, String)>,
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn csv(header: &str, rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header.split(',')).expect("in-memory write");
    for row in rows {
        w.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("UTF-8 fields")
}

/// Shortest round-trip form, switching to exponent notation for extremes.
fn num(v: f64) -> String {
    format!("{v:?}")
}

pub fn bubble_check(cfg: &BubbleCheckConfig) -> Result<Outcome> {
    let n = cfg.n;
    let exp = ConformalExponents::new(n)?;
    let k_n = exp.bubble_constant();
    let u = Bubble::unit(n)?;
    let origin = vec![0.0; n];

    // Δ(ΔU) from the closed-form ΔU profile and one radial stencil.
    let radii = RadialField::uniform_radii(cfg.radial_max, cfg.radial_nodes);
    let lap = RadialField::sample(radii.clone(), |r| u.laplacian_profile(r))?;
    let b = radial_laplacian(&lap, n)?;
    let valid = b.valid_len();
    let e_origin = rel(b.values()[0], u.bilaplacian(&origin));
    let q_err = (0..valid)
        .map(|i| rel(b.values()[i] / u.profile(radii[i]).powf(exp.q()), k_n))
        .fold(0.0, f64::max);
    let radial_ok = e_origin < cfg.radial_tolerance && q_err < cfg.radial_tolerance;

    let grid = GridField::sample(n, -cfg.half_width, cfg.half_width, cfg.m, &u)?;
    let bil = bilaplacian(&grid)?;
    let target = |x: &[f64]| k_n * u.value(x).powf(exp.q());
    let interior = bil.interior_indices();
    let scale = interior.iter().map(|&i| target(&grid.coords(i))).fold(0.0, f64::max);
    let residual = interior
        .iter()
        .map(|&i| (bil.value_at(i) - target(&grid.coords(i))).abs())
        .fold(0.0, f64::max)
        / scale;

    // Same operator at half the spacing, probed on a subset of the coarse nodes.
    let h = grid.spacing();
    let (mut e_h, mut e_h2) = (0.0f64, 0.0f64);
    for &i in interior.iter().step_by(5) {
        let x = grid.coords(i);
        let t = target(&x);
        e_h = e_h.max((bil.value_at(i) - t).abs());
        e_h2 = e_h2.max((bilaplacian_probe(&u, &x, h / 2.0) - t).abs());
    }
    let order = (e_h / e_h2).log2();

    let rows = (0..valid).map(|i| {
        let r = radii[i];
        let q = b.values()[i] / u.profile(r).powf(exp.q());
        vec![num(r), num(u.profile(r)), num(b.values()[i]), num(q)]
    });
    let radial_csv = csv("r,u,bilaplacian,q", rows);

    Ok(Outcome {
        assertions: vec![
            Assertion::new(
                "radial",
                radial_ok,
                format!("Δ²U(0) error {e_origin:.2e}, max Q error {q_err:.2e} (tolerance {:e})", cfg.radial_tolerance),
            ),
            Assertion::new(
                "grid",
                residual < cfg.grid_tolerance,
                format!("relative residual {residual:.3e} at m={} (tolerance {:e})", cfg.m, cfg.grid_tolerance),
            ),
            Assertion::new(
                "convergence",
                order >= cfg.min_order,
                format!("observed order {order:.2} under halving h (minimum {})", cfg.min_order),
            ),
        ],
        result: json!({
            "bubble_constant": k_n,
            "bilaplacian_origin": b.values()[0],
            "bilaplacian_origin_error": e_origin,
            "q_error": q_err,
            "grid_residual": residual,
            "spacing": h,
            "order": order,
        }),
        files: vec![("radial.csv".into(), radial_csv)],
    })
}

pub fn q_audit(cfg: &QAuditConfig) -> Result<Outcome> {
    let n = cfg.n;
    let data = ExactCurvatureData::round_sphere(n);
    let printed = q_curvature_tensorial_exact(&data, n, QMode::AsPrinted)?;
    let consistent = q_curvature_tensorial_exact(&data, n, QMode::CovarianceConsistent)?;
    let ni = n as i64;
    let expected = reduced(ni * (ni * ni - 4), 8);
    let as_f64 = |r: &(i64, i64)| r.0 as f64 / r.1 as f64;
    let p = (*printed.numer(), *printed.denom());
    let c = (*consistent.numer(), *consistent.denom());
    Ok(Outcome {
        assertions: vec![
            Assertion::new(
                "covariance-consistent",
                c == expected,
                format!("Q = {consistent} against round-sphere value {}/{}", expected.0, expected.1),
            ),
            Assertion::expected_fail(
                "as-printed",
                p == expected,
                format!("Q = {printed} ({}) against {}/{}: known coefficient error", as_f64(&p), expected.0, expected.1),
            ),
        ],
        result: json!({
            "n": n,
            "as_printed": printed.to_string(),
            "as_printed_value": as_f64(&p),
            "covariance_consistent": consistent.to_string(),
            "covariance_consistent_value": as_f64(&c),
            "round_sphere": as_f64(&expected),
        }),
        files: vec![],
    })
}

/// Reduced fraction as (numerator, denominator).
fn reduced(a: i64, b: i64) -> (i64, i64) {
    fn gcd(a: i64, b: i64) -> i64 {
        if b == 0 { a.abs() } else { gcd(b, a % b) }
    }
    let g = gcd(a, b);
    (a / g, b / g)
}

pub fn radial_blowup(cfg: &RadialBlowupConfig) -> Result<Outcome> {
    let n = cfg.n;
    let radii = RadialField::uniform_radii(cfg.r_max, cfg.nodes);
    let state = simulate_lower_system(n, cfg.w0, cfg.u0, radii, cfg.max_iter, cfg.tol)?;
    let cert = iterate_lower_bounds(n, cfg.u0, cfg.k_max, &state.radii)?;
    // Rounding slack for the floating-point bounds.
    const SLACK: f64 = 1e-12;
    let lower = |r: f64| cfg.w0 - cfg.u0 * r * r / (2.0 * n as f64);
    let quad_ok = state.radii.iter().zip(&state.w_bar).all(|(r, w)| *w >= lower(*r) - SLACK * lower(*r).abs());
    let mono = state.u_bar.windows(2).all(|w| w[1] <= w[0]);
    let mut worst = f64::INFINITY;
    for e in &cert.entries {
        for (r, w) in state.radii.iter().zip(&state.w_bar).skip(1) {
            worst = worst.min(w / e.bound(*r)).min(w / e.product_bound(*r));
            worst = worst.min(w / cert.collapsed_bound(*r, e.k));
        }
    }

    let mut header = String::from("r,w_bar,u_bar");
    for k in 1..=cfg.k_max {
        write!(header, ",bound_k{k}").unwrap();
    }
    let rows = (0..state.radii.len()).map(|i| {
        let r = state.radii[i];
        let mut row = vec![num(r), num(state.w_bar[i]), num(state.u_bar[i])];
        row.extend(cert.entries[1..].iter().map(|e| num(e.bound(r))));
        row
    });
    let radial_csv = csv(&header, rows);
    let certificate = serde_json::to_string_pretty(&cert)? + "\n";
    let divergence = match cert.divergence_radius {
        Some(r) => format!("divergence radius {r:.4}"),
        None => format!("divergence threshold {:.4} beyond r_max", cert.divergence_threshold),
    };

    Ok(Outcome {
        assertions: vec![
            Assertion::new("quadratic-bound", quad_ok, format!("w̄ >= w0 - u0 r²/(2n) on {} radii", state.radii.len())),
            Assertion::new("monotone", mono, "ū nonincreasing".into()),
            Assertion::new(
                "certificate",
                worst >= 1.0 - SLACK,
                format!("min w̄/bound {worst:.6} over k <= {}, {divergence}", cfg.k_max),
            ),
        ],
        result: json!({
            "w_bar_end": state.w_bar.last(),
            "u_bar_end": state.u_bar.last(),
            "min_bound_ratio": worst,
            "c1": cert.c1,
            "c2": cert.c2,
            "divergence_threshold": cert.divergence_threshold,
            "divergence_radius": cert.divergence_radius,
        }),
        files: vec![("radial.csv".into(), radial_csv), ("certificate.json".into(), certificate)],
    })
}

pub fn poincare(cfg: &PoincareConfig) -> Result<Outcome> {
    let g = SchottkyGroup::new(&cfg.group)?;
    let n = g.dim();
    let exp = ConformalExponents::new(n)?;
    let x = cfg.point.clone().unwrap_or_else(|| g.base_point());
    let est = estimate_poincare_exponent(&g, &x, cfg.depth, cfg.tol)?;
    let delta = cfg.delta.unwrap_or(exp.weight());
    let sums = poincare_partial_sum(&g, delta, cfg.depth, &x)?;
    let cumulative = sums.cumulative();
    let decaying = sums.shells[1..].windows(2).all(|w| w[1] < w[0]);
    let shells_csv = csv(
        "word_length,shell_sum,cumulative",
        sums.shells.iter().zip(&cumulative).enumerate().map(|(k, (s, c))| vec![k.to_string(), num(*s), num(*c)]),
    );
    Ok(Outcome {
        assertions: vec![
            Assertion::new(
                "exponent-gate",
                est.gate,
                format!("δ̂ = {:.4} against (n-4)/2 = {}", est.delta_hat, exp.weight()),
            ),
            Assertion::new(
                "shell-decay",
                decaying,
                format!("shells at δ = {delta} through length {}, partial sum {:.6}", cfg.depth, sums.total()),
            ),
        ],
        result: json!({ "estimate": est, "delta": delta, "partial_sum": sums.total() }),
        files: vec![("shells.csv".into(), shells_csv)],
    })
}

pub fn orbit(cfg: &OrbitIntegralConfig) -> Result<Outcome> {
    let g = SchottkyGroup::new(&cfg.group)?;
    let n = g.dim();
    let exp = ConformalExponents::new(n)?;
    let v = match &cfg.field {
        Some(b) => Bubble::new(n, b.lambda, b.center(n))?,
        None => Bubble::unit(n)?,
    };
    let params = OrbitParams {
        word_depth: cfg.word_depth,
        series_depth: cfg.series_depth,
        samples: cfg.samples,
        seed: cfg.seed.expect("validated"),
    };
    let report = orbit_integral(&g, |x: &[f64]| v.value(x), &exp, &params)?;
    let agree = report.words.iter().filter(|w| w.agrees).count();
    let inc = report.increments();
    let ratios: Vec<f64> = inc.windows(2).map(|w| w[1] / w[0]).collect();
    let sums_ok = inc.iter().all(|d| *d > 0.0) && ratios.iter().all(|r| *r < 1.0);

    let words_csv = csv(
        "index,word,length,lhs,lhs_stderr,rhs,rhs_stderr,accepted,agrees",
        report.words.iter().map(|w| {
            vec![
                w.index.to_string(),
                w.word.clone(),
                w.length.to_string(),
                num(w.lhs),
                num(w.lhs_stderr),
                num(w.rhs),
                num(w.rhs_stderr),
                w.accepted.to_string(),
                w.agrees.to_string(),
            ]
        }),
    );
    let sums_csv = csv(
        "word_length,partial_sum,increment",
        report.partial_sums.iter().enumerate().map(|(k, s)| {
            let d = if k == 0 { *s } else { s - report.partial_sums[k - 1] };
            vec![k.to_string(), num(*s), num(d)]
        }),
    );
    Ok(Outcome {
        assertions: vec![
            Assertion::new(
                "two-sided",
                agree == report.words.len(),
                format!("{agree}/{} words agree within 3 standard errors", report.words.len()),
            ),
            Assertion::new(
                "partial-sums",
                sums_ok,
                format!(
                    "increasing, increment ratios [{}]",
                    ratios.iter().map(|r| format!("{r:.3}")).collect::<Vec<_>>().join(", ")
                ),
            ),
        ],
        result: json!({ "words": report.words.len(), "agreeing": agree, "partial_sums": report.partial_sums }),
        files: vec![("words.csv".into(), words_csv), ("partial_sums.csv".into(), sums_csv)],
    })
}

pub fn moving_plane(cfg: &MovingPlaneConfig) -> Result<Outcome> {
    let n = cfg.n;
    let seed = cfg.seed.unwrap_or(0);
    let (v, singular): (Box<dyn ScalarField + Sync>, SingularSet) = match &cfg.source {
        FieldSource::Bubble(b) => (Box::new(Bubble::new(n, b.lambda, b.center(n))?), SingularSet::empty()),
        FieldSource::Automorphic { group, depth } => {
            let g = SchottkyGroup::new(group)?;
            let field = SeriesField::new(&g, *depth, cfg.epsilon)?;
            let singular = field.singular_set().clone();
            (Box::new(field), singular)
        }
    };
    let v: &dyn ScalarField = v.as_ref();
    let w = NegLaplacian(v);
    let axis = cfg.axis.unwrap_or(n - 1);
    let mut scan = PlaneScan::new(axis, cfg.lambda_range, cfg.step);
    scan.samples = cfg.samples;
    scan.check_radius = cfg.check_radius;
    scan.plane_samples = cfg.plane_samples;
    scan.tolerance = cfg.tolerance;
    scan.seed = seed;
    let report = find_lambda_star(v, &w, &singular, &scan)?;

    let expansion = fit_far_field(v, cfg.far_field.annulus, cfg.far_field.samples, seed)?;
    let far_ok = expansion.a0 > 0.0 && expansion.residual < 1e-2;
    let mut far_detail = format!("a0 = {:.6}, fit residual {:.2e}", expansion.a0, expansion.residual);
    let region = if axis == n - 1 && far_ok {
        let region = asymptotic_sign_region(v, &expansion, cfg.region_samples)?;
        write!(far_detail, ", sign region |x| >= {:.3} verified on {} points", region.c1, region.verified_samples)?;
        Some(region)
    } else {
        None
    };

    let critical_ok = !report.reached_bottom && report.symmetric;
    Ok(Outcome {
        assertions: vec![
            Assertion::new(
                "critical-plane",
                critical_ok,
                format!(
                    "Λ* = {:.6} (tolerance {:.1e}), asymmetry {:.2e}, {} planes",
                    report.lambda_star, report.tolerance, report.asymmetry, report.planes_tested
                ),
            ),
            Assertion::new(
                "derivative-sign",
                report.derivative_sign_ok,
                format!("∂v/∂x_{axis} < 0 on {} traced planes above Λ*", report.derivative_sign_trace.len()),
            ),
            Assertion::new("far-field", far_ok, far_detail),
        ],
        result: json!({ "report": report, "far_field": expansion, "sign_region": region }),
        files: vec![("derivative_trace.csv".into(), report.trace_csv())],
    })
}

pub fn blowup(cfg: &BlowupConfig) -> Result<Outcome> {
    let n = cfg.n;
    let exp = ConformalExponents::new(n)?;
    let center = cfg.source.center(n);
    let src = Bubble::unit_q(n, cfg.source.lambda, center)?;
    let src = src.clone().with_amplitude(src.amplitude() * cfg.amplitude_factor);

    // Peak search on a cube about the search centre.
    let shift = cfg.search.center.clone().unwrap_or_else(|| vec![0.0; n]);
    let at = |x: &[f64]| -> Vec<f64> { x.iter().zip(&shift).map(|(a, b)| a + b).collect() };
    let search_field = FnField::new(n, |x: &[f64]| src.value(&at(x)));
    let hw = cfg.search.half_width;
    let grid = GridField::sample(n, -hw, hw, cfg.search.m, &search_field)?;
    let peak = find_peak(&grid)?;
    let peak_point = at(&peak.refined);

    let job = RescaleJob::new(&src, peak_point.clone(), &exp)?;
    let samples = window_samples(&vec![0.0; n], cfg.match_window, cfg.match_samples);
    let fit = bubble_match(&job, &samples)?;
    let length = job.length_factor();
    let lambda = fit.lambda / length;
    let x0: Vec<f64> = peak_point.iter().zip(&fit.center).map(|(p, c)| p + length * c).collect();

    let rg = &cfg.residual_grid;
    let rescaled = GridField::sample(n, -rg.half_width, rg.half_width, rg.m, &job)?;
    let invariance = equation_invariance_check(&rescaled, &exp)?;

    let origin = vec![0.0; n];
    let convexity = ball_convexity(&job, &origin, cfg.window_radius, &exp, cfg.convexity_samples, cfg.seed.unwrap_or(0))?;

    Ok(Outcome {
        assertions: vec![
            Assertion::new(
                "match",
                fit.match_error < cfg.thresholds.match_error,
                format!("bubble match error {:.2e} (threshold {:e})", fit.match_error, cfg.thresholds.match_error),
            ),
            Assertion::new(
                "invariance",
                invariance.relative_residual < cfg.thresholds.residual,
                format!(
                    "rescaled equation residual {:.3e} at h = {:.4} (threshold {:e})",
                    invariance.relative_residual, invariance.spacing, cfg.thresholds.residual
                ),
            ),
            Assertion::new(
                "concavity",
                convexity.verdict == Convexity::Concave && convexity.chart_agrees(),
                format!(
                    "B_{}(0) is {:?} (curvature in [{:.3e}, {:.3e}], chart agreement {}/{})",
                    cfg.window_radius,
                    convexity.verdict,
                    convexity.min_curvature,
                    convexity.max_curvature,
                    convexity.chart_agreements,
                    convexity.samples
                ),
            ),
        ],
        result: json!({
            "lambda": lambda,
            "x0": x0,
            "match_error": fit.match_error,
            "rescaled_fit": fit,
            "peak": peak,
            "peak_value": job.peak_value(),
            "length_factor": length,
            "invariance": invariance,
            "convexity": convexity,
        }),
        files: vec![],
    })
}

pub fn paneitz(cfg: &PaneitzConfig) -> Result<Outcome> {
    let n = cfg.n;
    let exp = ConformalExponents::new(n)?;
    // The round unit sphere has Q = K_n in the flat normalization.
    let target = exp.bubble_constant() * sphere_area(n).powf(4.0 / n as f64);
    let radii = RadialField::uniform_radii(cfg.r_max, cfg.nodes);
    let functional = |lambda: f64| -> Result<f64> {
        let b = Bubble::unit_q(n, lambda, vec![0.0; n])?;
        Ok(paneitz_functional_radial(&b.radial_field(radii.clone())?, &exp)?)
    };
    let value = functional(cfg.lambda)?;
    let doubled = functional(2.0 * cfg.lambda)?;
    let err = rel(value, target);
    let drift = rel(doubled, value);
    Ok(Outcome {
        assertions: vec![
            Assertion::new(
                "functional",
                err < cfg.tolerance,
                format!("{value:.6} against K_n·|S^n|^(4/n) = {target:.6}, relative error {err:.2e}"),
            ),
            Assertion::new(
                "scale-invariance",
                drift < cfg.tolerance,
                format!("λ → 2λ changes the value by {drift:.2e}"),
            ),
        ],
        result: json!({ "value": value, "target": target, "relative_error": err, "doubled_lambda_value": doubled }),
        files: vec![],
    })
}
