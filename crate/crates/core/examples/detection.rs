//! Photon-counting decision between "atom" and "empty cavity".

use bluetrap::detect::{bayes_rule, confidence, confidence_vs_time, simulate_detection, DetectionSetup};

fn main() -> bluetrap::Result<()> {
    let setup = DetectionSetup::reference();
    let rule = bayes_rule(&setup)?;
    let exact = confidence(&setup)?;
    let mc = simulate_detection(&setup, 200_000, 11)?;
    println!(
        "means {:.2} / {:.2} counts, rule {rule:?}",
        setup.mean_empty(),
        setup.mean_atom()
    );
    println!(
        "p_correct {:.4} exact, {:.4} +- {:.4} simulated",
        exact.p_correct,
        mc.p_correct(),
        mc.standard_error()
    );

    let grid: Vec<f64> = (1..=40).map(|i| i as f64 * 1e-6).collect();
    let curve = confidence_vs_time(&setup, &grid, 0.99)?;
    for (tau, p) in curve.points.iter().step_by(5) {
        println!("{:5.1} us   {p:.4}", tau * 1e6);
    }
    match curve.tau_star {
        Some(t) => println!("99% reached after {:.0} us", t * 1e6),
        None => println!("99% not reached within 40 us"),
    }
    Ok(())
}
