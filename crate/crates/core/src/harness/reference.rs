//! Published state-value columns the reproductions are compared against,
//! indexed by state A..P.

pub const TABLE1_COLUMNS: [&str; 4] = ["q", "vi", "ddpn", "reduced"];

pub const TABLE1: [[f64; 16]; 4] = [
    // Tabular Q-learning
    [
        5.31, 5.90, 6.56, 5.90, 5.90, -3.44, 7.29, -3.44, 6.561, 7.29, 8.1, -1.0, -2.71, 8.1, 9.0, 10.0,
    ],
    // Tabular value iteration
    [
        5.31, 5.91, 6.56, 5.91, 5.91, -3.44, 7.29, -3.44, 6.561, 7.29, 8.01, -1.01, -2.71, 8.01, 8.99, 9.99,
    ],
    // DDPN, clean inputs
    [
        5.43, 5.74, 6.48, 5.72, 5.73, -3.46, 7.20, -3.50, 6.53, 7.22, 7.88, -1.13, -2.77, 7.92, 8.83, 9.85,
    ],
    // Reduced DDPN on clean features
    [
        5.31, 5.42, 6.11, 5.43, 5.47, -3.92, 6.99, -3.80, 6.24, 6.93, 7.74, -1.41, -3.10, 7.72, 8.60, 9.62,
    ],
];

pub const TABLE2_COLUMNS: [&str; 5] = ["dqn", "vi", "ddpn_noisy", "reduced_noisy", "deepmod"];

pub const TABLE2: [[f64; 16]; 5] = [
    // DQN
    [
        5.35, 5.76, 6.45, 6.08, 5.63, -3.78, 7.44, -3.20, 6.54, 6.96, 7.63, -1.24, -2.87, 7.80, 9.07, 9.75,
    ],
    // Tabular value iteration
    [
        5.31, 5.91, 6.56, 5.91, 5.91, -3.44, 7.29, -3.44, 6.561, 7.29, 8.01, -1.01, -2.71, 8.01, 8.99, 9.99,
    ],
    // DDPN, noisy inputs
    [
        5.43, 6.26, 6.91, 5.97, 6.37, -2.52, 7.66, -3.12, 7.31, 7.77, 8.54, -0.32, -2.34, 8.93, 9.81, 10.49,
    ],
    // Reduced DDPN on noisy features
    [
        5.31, 5.90, 6.56, 5.90, 5.90, -3.44, 7.29, -3.44, 6.561, 7.29, 8.099, -1.00, -2.709, 8.09, 8.99, 9.99,
    ],
    // Feature-model DDPN
    [
        5.60, 6.65, 6.87, 6.59, 6.07, -3.49, 7.54, -3.50, 6.96, 7.87, 8.64, -0.76, -2.45, 8.48, 9.39, 10.3,
    ],
];

/// Reference column by name, for either table.
pub fn column(table: usize, name: &str) -> Option<&'static [f64; 16]> {
    let (names, cols): (&[&str], &[[f64; 16]]) = match table {
        1 => (&TABLE1_COLUMNS, &TABLE1),
        2 => (&TABLE2_COLUMNS, &TABLE2),
        _ => return None,
    };
    names.iter().position(|n| *n == name).map(|i| &cols[i])
}
