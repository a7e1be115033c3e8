//! The two worked models used in tests, the CLI and the acceptance suite.

use crate::model::{Gamble, ImpreciseQMatrix};

/// Six zero-sum gambles and lower rates on three states.
pub fn example1() -> ImpreciseQMatrix {
    let gambles = vec![
        vec![-1.0, 0.5, 0.5],
        vec![0.5, -1.0, 0.5],
        vec![-0.5, -0.5, 1.0],
        vec![0.5, 0.5, -1.0],
        vec![-0.5, 1.0, -0.5],
        vec![1.0, -0.5, -0.5],
    ];
    // rows are states, columns are gambles
    let by_state = [
        [0.76, -0.69, 0.15, -0.24, 0.60, -0.92],
        [-0.99, 1.21, 0.30, -0.39, -1.37, 0.90],
        [-0.24, -0.54, -0.76, 0.61, 0.45, 0.15],
    ];
    let lower = (0..6).map(|i| (0..3).map(|k| by_state[k][i]).collect()).collect();
    ImpreciseQMatrix::new(3, gambles, lower).expect("example 1 is a valid model")
}

pub fn example1_h() -> Gamble {
    Gamble::new(vec![-0.7, 1.7, -1.0]).expect("finite")
}

pub fn example2_bounds() -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let lower = vec![
        vec![-0.98, 0.32, 0.32, 0.19],
        vec![730.0, -1460.61, 0.0, 0.51],
        vec![730.0, 0.0, -1460.61, 0.51],
        vec![0.0, 730.0, 730.0, -2920.0],
    ];
    let upper = vec![
        vec![-0.83, 0.37, 0.37, 0.24],
        vec![1460.0, -730.51, 0.0, 0.61],
        vec![1460.0, 0.0, -730.51, 0.61],
        vec![0.0, 1460.0, 1460.0, -1460.0],
    ];
    (lower, upper)
}

/// Interval model of repair and failure rates on four states.
pub fn example2() -> ImpreciseQMatrix {
    let (lower, upper) = example2_bounds();
    ImpreciseQMatrix::from_intervals(&lower, &upper).expect("example 2 is a valid model")
}
