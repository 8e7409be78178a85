//! Rest points and a trajectory of the replicator dynamics on a
//! three-strategy meta-game; writes `simplex.svg` to the working directory.

use riskq::egt::{directional_field, find_equilibria, integrate_trajectory, simplex_svg, MetaPayoffTable, Mixture};

fn main() -> riskq::Result<()> {
    let table = MetaPayoffTable::from_dense(
        2,
        &[
            (vec![2, 0, 0], vec![0.9130, 0.0, 0.0]),
            (vec![1, 1, 0], vec![0.7311, 0.7970, 0.0]),
            (vec![0, 2, 0], vec![0.0, 1.0298, 0.0]),
            (vec![1, 0, 1], vec![0.6791, 0.0, 1.0786]),
            (vec![0, 0, 2], vec![0.0, 0.0, 2.2177]),
            (vec![0, 1, 1], vec![0.0, 0.7766, 1.4386]),
        ],
    )?;
    for e in find_equilibria(&table, 1e-9)? {
        println!("{:?} {:?} (max Re {:+.4})", e.x.as_slice(), e.stability, e.max_real_part);
    }
    let starts = [Mixture::centroid(3), Mixture::new(vec![0.8, 0.15, 0.05])?, Mixture::new(vec![0.1, 0.85, 0.05])?];
    let paths = starts
        .iter()
        .map(|x0| integrate_trajectory(&table, x0, 0.01, 3000))
        .collect::<riskq::Result<Vec<_>>>()?;
    for p in &paths {
        println!("{:?} -> {:?}", p[0].as_slice(), p.last().unwrap().as_slice());
    }
    let field = directional_field(&table, 12)?;
    let svg = simplex_svg(&table, &field, &paths, &find_equilibria(&table, 1e-9)?)?;
    std::fs::write("simplex.svg", svg)?;
    Ok(())
}
