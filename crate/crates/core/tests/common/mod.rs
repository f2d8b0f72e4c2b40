#![allow(dead_code)]

/// Every set partition of `{0, .., n-1}` as block sizes, by restricted growth strings.
pub fn set_partition_block_sizes(n: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    if n == 0 {
        return out;
    }
    let mut labels = vec![0usize; n];
    loop {
        let k = labels.iter().max().unwrap() + 1;
        let mut sizes = vec![0usize; k];
        for &l in &labels {
            sizes[l] += 1;
        }
        out.push(sizes);
        // next restricted growth string
        let mut i = n - 1;
        loop {
            if i == 0 {
                return out;
            }
            let prefix_max = labels[..i].iter().max().copied().unwrap();
            if labels[i] <= prefix_max {
                labels[i] += 1;
                for l in labels.iter_mut().skip(i + 1) {
                    *l = 0;
                }
                break;
            }
            i -= 1;
        }
    }
}

/// Probability of one particular partition with the given block sizes.
pub fn eppf(alpha: f64, theta: f64, sizes: &[usize]) -> f64 {
    let n: usize = sizes.iter().sum();
    let k = sizes.len();
    let mut num = 1.0;
    for i in 1..k {
        num *= theta + i as f64 * alpha;
    }
    for &s in sizes {
        for j in 1..s {
            num *= j as f64 - alpha;
        }
    }
    let mut den = 1.0;
    for j in 1..n {
        den *= theta + j as f64;
    }
    num / den
}

/// Law of the number of blocks by exhaustive enumeration; index `k - 1`.
pub fn brute_force_kn(alpha: f64, theta: f64, n: usize) -> Vec<f64> {
    let mut pmf = vec![0.0; n];
    for sizes in set_partition_block_sizes(n) {
        pmf[sizes.len() - 1] += eppf(alpha, theta, &sizes);
    }
    pmf
}

/// Bell numbers 0..=8.
pub const BELL: [usize; 9] = [1, 1, 2, 5, 15, 52, 203, 877, 4140];
