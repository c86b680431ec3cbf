use std::sync::OnceLock;

use epmem::runner::{csv_string, preset, run_divisibility, run_trace, RunReport};

fn fig1_trace() -> &'static RunReport {
    static R: OnceLock<RunReport> = OnceLock::new();
    R.get_or_init(|| run_trace(&preset("fig1").unwrap()).unwrap())
}

fn fig1_div() -> &'static RunReport {
    static R: OnceLock<RunReport> = OnceLock::new();
    R.get_or_init(|| run_divisibility(&preset("fig1").unwrap()).unwrap())
}

#[test]
fn sigma_el_tracks_mutual_information_rate() {
    let e: Vec<_> = fig1_trace()
        .rows
        .iter()
        .filter_map(|r| r.entropy)
        .filter(|e| !e.masked && e.gt <= 3.0)
        .collect();
    let peak = e.iter().map(|e| e.di_ab.abs()).fold(0.0, f64::max);
    let dev = e
        .iter()
        .map(|e| (e.sigma_el - e.di_ab).abs())
        .fold(0.0, f64::max);
    assert!(dev <= 0.1 * peak, "{dev} vs peak {peak}");
    assert!(dev > 0.0);
    let first = e[0];
    assert!((first.sigma_el - first.di_ab).abs() <= 1e-6 * peak);
}

#[test]
fn mutual_information_rate_is_sum_of_entropy_rates() {
    let e: Vec<_> = fig1_trace()
        .rows
        .iter()
        .filter_map(|r| r.entropy)
        .filter(|e| !e.masked)
        .collect();
    let peak = e.iter().map(|e| e.di_ab.abs()).fold(0.0, f64::max);
    for s in &e {
        assert!(
            (s.di_ab - s.sdot_a - s.sdot_b).abs() <= 1e-6 * peak,
            "gt={}",
            s.gt
        );
    }
}

#[test]
fn integrated_sigma_es_is_nonnegative() {
    let rows = &fig1_trace().rows;
    let h = rows[1].t - rows[0].t;
    let mut acc = 0.0;
    for w in rows.windows(2) {
        let (a, b) = (w[0].entropy.unwrap(), w[1].entropy.unwrap());
        acc += 0.5 * h * (a.sigma_es + b.sigma_es);
        assert!(acc >= -1e-6, "gt={}: {acc}", b.gt);
    }
}

/// P-divisibility intervals on the weak-coupling run end where the
/// minimal entropy production changes sign.
#[test]
fn p_div_intervals_follow_sigma_min_sign() {
    let rep = fig1_div();
    let dgt = rep.rows[1].gt - rep.rows[0].gt;
    let sign_changes: Vec<f64> = rep
        .rows
        .windows(2)
        .filter(|w| (w[0].sigma_min >= -1e-8) != (w[1].sigma_min >= -1e-8))
        .map(|w| w[1].gt)
        .collect();
    assert!(rep.intervals.len() > 2);
    for iv in &rep.intervals[1..] {
        let near = sign_changes
            .iter()
            .any(|&g| (g - iv.gt_start).abs() <= dgt + 1e-12);
        assert!(
            near,
            "interval start {} has no σ_min sign change within {dgt}",
            iv.gt_start
        );
    }
    for r in &rep.rows {
        if r.p_div == Some(false) {
            assert!(r.sigma_map < 0.0, "gt={}", r.gt);
        }
        if !r.masked {
            assert!(r.sigma_map <= r.sigma_min + 1e-8, "gt={}", r.gt);
        }
    }
}

#[test]
fn fig4_map_negative_while_minimum_positive_near_1_26() {
    let mut s = preset("fig4").unwrap();
    s.cfg.t_max = 1.4 / s.params.g;
    s.cfg.n_steps = 175;
    let rep = run_divisibility(&s).unwrap();
    let r = rep
        .rows
        .iter()
        .min_by(|a, b| (a.gt - 1.26).abs().total_cmp(&(b.gt - 1.26).abs()))
        .unwrap();
    assert!((r.gt - 1.26).abs() < 0.01);
    assert_eq!(r.p_div, Some(false));
    assert!(r.sigma_map < 0.0);
    assert!(r.sigma_min > 0.0, "σ_min = {}", r.sigma_min);
}

#[test]
fn trace_is_deterministic() {
    let mut s = preset("fig2").unwrap();
    s.cfg.n_steps = 100;
    let a = csv_string(&run_trace(&s).unwrap());
    let b = csv_string(&run_trace(&s).unwrap());
    assert_eq!(a, b);
}
