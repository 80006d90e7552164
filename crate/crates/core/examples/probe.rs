// Scratch timing probe for solver behavior on the cart-pole transcription.
use homotopy_opt::problems::{CartPoleNlp, CartPoleParams, TranscriptionSettings};
use homotopy_opt::{solve, ParamNlp, SolverSettings};
use std::time::Instant;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let knots: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(101);
    let kkt: f64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(1e-4);
    let max_inner: usize = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(2000);
    let growth: f64 = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(10.0);
    let nlp = CartPoleNlp::new(TranscriptionSettings::with_knots(knots)).unwrap();
    let settings = SolverSettings {
        kkt_tol: kkt,
        max_inner_iters: max_inner,
        penalty_growth: growth,
        trace: std::env::var("TRACE").is_ok(),
        ..SolverSettings::default()
    };
    env_logger::init();

    for (name, params) in [
        ("easy", CartPoleParams::easy()),
        ("mid", CartPoleParams { m_pole: 20.0, l_pole: 1.2, f_max: 150.0, ..CartPoleParams::easy() }),
        ("hard", CartPoleParams::hard()),
    ] {
        let theta = params.to_theta();
        let t0 = Instant::now();
        let report = solve(&nlp, &theta, &nlp.zero_guess(), &settings);
        println!(
            "{name:5} N={knots}: status={:?} obj={:.4} viol={:.2e} outer={} inner={} time={:.3}s",
            report.status,
            report.objective,
            report.constraint_violation,
            report.outer_iters,
            report.inner_iters_total,
            t0.elapsed().as_secs_f64()
        );
        if report.converged() {
            let feas = nlp.is_feasible(&report.x_star, &theta, &settings.feasibility_tolerance());
            let phi_end = report.x_star[4 * (knots - 1) + 2];
            println!("       feasible={feas} phi(T)={phi_end:.6}");
        }
    }
}
