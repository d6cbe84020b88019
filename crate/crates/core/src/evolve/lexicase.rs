use rand::seq::SliceRandom;
use rand::Rng;

/// Row-major matrix of per-case errors: one row per individual, one column
/// per fitness case.
#[derive(Debug, Clone, PartialEq)]
pub struct FitnessMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl FitnessMatrix {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == cols), "ragged fitness rows");
        FitnessMatrix {
            rows: rows.len(),
            cols,
            data: rows.into_iter().flatten().collect(),
        }
    }

    pub fn individuals(&self) -> usize {
        self.rows
    }

    pub fn cases(&self) -> usize {
        self.cols
    }

    pub fn get(&self, individual: usize, case: usize) -> f64 {
        self.data[individual * self.cols + case]
    }

    pub fn row(&self, individual: usize) -> &[f64] {
        &self.data[individual * self.cols..(individual + 1) * self.cols]
    }

    /// Median absolute deviation of each case over the whole population.
    pub fn case_epsilons(&self) -> Vec<f64> {
        (0..self.cols)
            .map(|c| {
                let column: Vec<f64> = (0..self.rows).map(|r| self.get(r, c)).collect();
                mad(&column)
            })
            .collect()
    }
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n == 0 {
        return 0.0;
    }
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

pub fn mad(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    let m = median(&mut v);
    let mut dev: Vec<f64> = values.iter().map(|x| (x - m).abs()).collect();
    median(&mut dev)
}

/// ε-lexicase: filter the population case by case in random order, keeping
/// individuals within `epsilons[case]` of the best remaining one, and pick
/// uniformly among the survivors.
pub fn epsilon_lexicase_select<R: Rng + ?Sized>(fitness: &FitnessMatrix, epsilons: &[f64], rng: &mut R) -> usize {
    assert!(fitness.individuals() > 0, "selection from an empty population");
    let mut cases: Vec<usize> = (0..fitness.cases()).collect();
    cases.shuffle(rng);
    let mut pool: Vec<usize> = (0..fitness.individuals()).collect();
    for &c in &cases {
        if pool.len() == 1 {
            break;
        }
        let best = pool.iter().map(|&i| fitness.get(i, c)).fold(f64::INFINITY, f64::min);
        let limit = best + epsilons[c];
        pool.retain(|&i| fitness.get(i, c) <= limit);
    }
    pool[rng.random_range(0..pool.len())]
}
