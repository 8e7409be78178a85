//! The exponential utility and its shifted form for a few risk levels.

use riskq::UtilityParams;

fn main() -> riskq::Result<()> {
    let betas = [-2.0, -0.5, -1e-4, 0.5];
    print!("{:>6}", "x");
    for b in betas {
        print!("  u~(x) b={b:<7}");
    }
    println!();
    for i in -4..=4 {
        let x = i as f64 * 0.5;
        print!("{x:>6.2}");
        for b in betas {
            let u = UtilityParams::new(b)?;
            print!("  {:>17.6}", u.shifted(x));
        }
        println!();
    }
    // near zero the shifted utility is a rescaled identity
    let tiny = UtilityParams::new(-1e-4)?;
    let x = 0.3;
    println!("tiny beta: u~({x}) / (-beta) = {:.8}", tiny.shifted(x) / 1e-4);
    let (lo, hi) = UtilityParams::with_truncation(-1.0, 6.0)?.lipschitz_bounds();
    println!("slope bounds on [-6, 6] at beta = -1: [{lo:.4e}, {hi:.4e}]");
    Ok(())
}
