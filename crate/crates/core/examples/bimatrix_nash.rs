//! Support enumeration on a few classic games.

use riskq::bimatrix::{exploitability, solve_bimatrix, BimatrixGame};

fn show(name: &str, g: &BimatrixGame) -> riskq::Result<()> {
    let p = solve_bimatrix(g, 1e-9)?;
    println!("{name:<18} x = {:?}  y = {:?}  exploitability {:.1e}", p.x, p.y, exploitability(g, &p));
    Ok(())
}

fn main() -> riskq::Result<()> {
    let pennies = BimatrixGame::zero_sum(2, 2, vec![1.0, -1.0, -1.0, 1.0])?;
    show("matching pennies", &pennies)?;

    let dilemma = BimatrixGame::from_rows(
        &[vec![-1.0, -3.0], vec![0.0, -2.0]],
        &[vec![-1.0, 0.0], vec![-3.0, -2.0]],
    )?;
    show("prisoner's dilemma", &dilemma)?;

    let battle = BimatrixGame::from_rows(&[vec![2.0, 0.0], vec![0.0, 1.0]], &[vec![1.0, 0.0], vec![0.0, 2.0]])?;
    show("battle of sexes", &battle)?;

    let rps = BimatrixGame::zero_sum(3, 3, vec![0.0, -1.0, 1.0, 1.0, 0.0, -1.0, -1.0, 1.0, 0.0])?;
    show("rock-paper-scissors", &rps)?;
    Ok(())
}
