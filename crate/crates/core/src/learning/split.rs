use rand::seq::SliceRandom;

use crate::seeds::SeedStream;

/// Graph indices of one fold.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub dev: Vec<usize>,
    pub test: Vec<usize>,
}

fn carve_dev(mut rest: Vec<usize>, dev_fraction: f64) -> (Vec<usize>, Vec<usize>) {
    let n_dev = if rest.len() < 2 { 0 } else { ((rest.len() as f64 * dev_fraction).ceil() as usize).min(rest.len() - 1) };
    let train = rest.split_off(n_dev);
    (train, rest)
}

/// Splits `n` graphs into `folds` train/dev/test partitions. With one fold
/// a fifth of the graphs is held out for testing. Dev graphs are carved
/// from each fold's training portion.
pub fn splits(n: usize, folds: usize, dev_fraction: f64, seeds: &SeedStream) -> Vec<Split> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seeds.rng("folds"));
    let folds = folds.max(1);
    if folds == 1 {
        let n_test = if n < 2 { 0 } else { n.div_ceil(5) };
        let rest = order.split_off(n_test);
        let (train, dev) = carve_dev(rest, dev_fraction);
        let mut test = order;
        test.sort_unstable();
        return vec![Split { train: sorted(train), dev: sorted(dev), test }];
    }
    (0..folds)
        .map(|k| {
            let test: Vec<usize> = order.iter().enumerate().filter(|(i, _)| i % folds == k).map(|(_, g)| *g).collect();
            let rest: Vec<usize> = order.iter().enumerate().filter(|(i, _)| i % folds != k).map(|(_, g)| *g).collect();
            let (train, dev) = carve_dev(rest, dev_fraction);
            Split { train: sorted(train), dev: sorted(dev), test: sorted(test) }
        })
        .collect()
}

fn sorted(mut v: Vec<usize>) -> Vec<usize> {
    v.sort_unstable();
    v
}
