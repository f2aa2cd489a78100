//! Equal-size block slicing of a problem across clients.

use std::collections::BTreeMap;

use ndarray::{s, Array1, Array2, Axis};

use crate::error::{OtError, PartitionError};
use crate::kernel::{gibbs_kernel, GibbsKernel};
use crate::problem::Problem;
use crate::scalar::Scalar;

/// One client's local data. Client `j` owns indices `[j·m, (j+1)·m)`.
#[derive(Debug, Clone)]
pub struct BlockView<T> {
    pub client_id: usize,
    pub clients: usize,
    pub block_size: usize,
    pub source: Array1<T>,
    /// `m × N` slice of the target histograms.
    pub targets: Array2<T>,
    /// Rows `[j·m, (j+1)·m)` of `K`.
    pub kernel_rows: Array2<T>,
    /// Columns `[j·m, (j+1)·m)` of `K`, stored transposed (`m × n`).
    pub kernel_cols_t: Array2<T>,
    /// Rows of the cost matrix, for local objective terms.
    pub cost_rows: Array2<T>,
    pub epsilon: T,
    /// Full-length working copies, initialized to ones.
    pub u: Array2<T>,
    pub v: Array2<T>,
}

impl<T> BlockView<T> {
    pub fn range(&self) -> std::ops::Range<usize> {
        self.client_id * self.block_size..(self.client_id + 1) * self.block_size
    }

    pub fn dim(&self) -> usize {
        self.block_size * self.clients
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SliceError {
    #[error(transparent)]
    Partition(#[from] PartitionError),
    #[error(transparent)]
    Kernel(#[from] OtError),
}

pub fn block_size(n: usize, c: usize) -> Result<usize, PartitionError> {
    if c == 0 || !n.is_multiple_of(c) {
        return Err(PartitionError::IndivisibleDimension { n, c });
    }
    Ok(n / c)
}

pub fn slice_problem<T: Scalar>(problem: &Problem<T>, c: usize) -> Result<Vec<BlockView<T>>, SliceError> {
    let kernel = gibbs_kernel(problem.cost().view(), problem.epsilon())?;
    Ok(slice_with_kernel(problem, &kernel, c)?)
}

pub fn slice_with_kernel<T: Scalar>(
    problem: &Problem<T>,
    kernel: &GibbsKernel<T>,
    c: usize,
) -> Result<Vec<BlockView<T>>, PartitionError> {
    let n = problem.dim();
    let m = block_size(n, c)?;
    let targets = problem.num_targets();
    Ok((0..c)
        .map(|j| {
            let r = j * m..(j + 1) * m;
            BlockView {
                client_id: j,
                clients: c,
                block_size: m,
                source: problem.source().slice(s![r.clone()]).to_owned(),
                targets: problem.targets().slice(s![r.clone(), ..]).to_owned(),
                kernel_rows: kernel.matrix().slice(s![r.clone(), ..]).to_owned(),
                kernel_cols_t: kernel.transposed().slice(s![r.clone(), ..]).to_owned(),
                cost_rows: problem.cost().slice(s![r, ..]).to_owned(),
                epsilon: problem.epsilon(),
                u: Array2::from_elem((n, targets), T::one()),
                v: Array2::from_elem((n, targets), T::one()),
            }
        })
        .collect())
}

fn collect_blocks<B>(
    slices: impl IntoIterator<Item = (usize, B)>,
    c: usize,
    len: impl Fn(&B) -> usize,
) -> Result<Vec<B>, PartitionError> {
    let mut by_id = BTreeMap::new();
    let mut expected = None;
    for (client, block) in slices {
        if client >= c {
            return Err(PartitionError::UnknownClient { client, c });
        }
        let l = len(&block);
        match expected {
            None => expected = Some(l),
            Some(e) if e != l => return Err(PartitionError::RaggedBlock { client, len: l, expected: e }),
            _ => {}
        }
        if by_id.insert(client, block).is_some() {
            return Err(PartitionError::DuplicateBlock(client));
        }
    }
    if let Some(missing) = (0..c).find(|j| !by_id.contains_key(j)) {
        return Err(PartitionError::MissingBlock(missing));
    }
    Ok(by_id.into_values().collect())
}

/// Concatenates one vector slice per client in ascending client id.
pub fn assemble<T: Clone>(slices: impl IntoIterator<Item = (usize, Vec<T>)>, c: usize) -> Result<Vec<T>, PartitionError> {
    Ok(collect_blocks(slices, c, Vec::len)?.concat())
}

/// Stacks `m × N` row blocks in ascending client id.
pub fn assemble_rows<T: Scalar>(
    blocks: impl IntoIterator<Item = (usize, Array2<T>)>,
    c: usize,
) -> Result<Array2<T>, PartitionError> {
    let blocks = collect_blocks(blocks, c, |b| b.nrows())?;
    let views: Vec<_> = blocks.iter().map(|b| b.view()).collect();
    ndarray::concatenate(Axis(0), &views).map_err(|_| PartitionError::RaggedBlock {
        client: 0,
        len: 0,
        expected: 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    fn four() -> Problem<f64> {
        let c = Array2::from_shape_fn((4, 4), |(i, j)| (i as f64 - j as f64).abs());
        Problem::single(c, array![0.3, 0.2, 0.1, 0.4], array![0.2, 0.3, 0.3, 0.2], 1.0).unwrap()
    }

    #[test]
    fn two_clients_on_four() {
        let views = slice_problem(&four(), 2).unwrap();
        assert_eq!(views[0].range(), 0..2);
        assert_eq!(views[1].range(), 2..4);
        assert_eq!(views[1].source.to_vec(), vec![0.1, 0.4]);
        let k = gibbs_kernel(four().cost().view(), 1.0).unwrap();
        assert_eq!(views[1].kernel_rows, k.matrix().slice(s![2..4, ..]));
        assert_eq!(views[1].kernel_cols_t, k.matrix().slice(s![.., 2..4]).t());
        assert!(views[0].u.iter().all(|&x| x == 1.0));
    }

    #[test]
    fn single_client_is_whole_problem() {
        let p = four();
        let views = slice_problem(&p, 1).unwrap();
        assert_eq!(views.len(), 1);
        assert_eq!(&views[0].source, p.source());
        assert_eq!(&views[0].cost_rows, p.cost());
    }

    #[test]
    fn indivisible() {
        let p = Problem::single(Array2::zeros((6, 6)), Array1::from_elem(6, 1.0 / 6.0), Array1::from_elem(6, 1.0 / 6.0), 1.0)
            .unwrap();
        assert!(matches!(
            slice_problem(&p, 4),
            Err(SliceError::Partition(PartitionError::IndivisibleDimension { n: 6, c: 4 }))
        ));
    }

    #[test]
    fn assemble_orders_by_client() {
        assert_eq!(assemble(vec![(0, vec![1, 2]), (1, vec![3, 4])], 2).unwrap(), vec![1, 2, 3, 4]);
        assert_eq!(assemble(vec![(1, vec![3, 4]), (0, vec![1, 2])], 2).unwrap(), vec![1, 2, 3, 4]);
        assert_eq!(
            assemble(vec![(0, vec![1, 2]), (0, vec![9, 9])], 2).unwrap_err(),
            PartitionError::DuplicateBlock(0)
        );
        assert_eq!(assemble(vec![(1, vec![3, 4])], 2).unwrap_err(), PartitionError::MissingBlock(0));
        assert!(matches!(
            assemble(vec![(0, vec![1]), (1, vec![3, 4])], 2),
            Err(PartitionError::RaggedBlock { client: 1, .. })
        ));
    }

    proptest! {
        #[test]
        fn assemble_inverts_slice(m in 1usize..6, c in 1usize..6, seed in 0u64..1000) {
            let n = m * c;
            let a: Vec<f64> = (0..n).map(|i| ((i as u64 * 2654435761 + seed) % 97) as f64 + 1.0).collect();
            let total: f64 = a.iter().sum();
            let a = Array1::from(a) / total;
            let p = Problem::single(Array2::zeros((n, n)), a.clone(), a.clone(), 1.0).unwrap();
            let views = slice_problem(&p, c).unwrap();
            let back = assemble(views.iter().map(|v| (v.client_id, v.source.to_vec())), c).unwrap();
            prop_assert_eq!(back, a.to_vec());
            let rows = assemble_rows(views.iter().map(|v| (v.client_id, v.kernel_rows.clone())), c).unwrap();
            let k = gibbs_kernel(p.cost().view(), 1.0).unwrap();
            prop_assert_eq!(rows, k.matrix().to_owned());
            let tb = assemble_rows(views.iter().rev().map(|v| (v.client_id, v.targets.clone())), c).unwrap();
            prop_assert_eq!(&tb, p.targets());
        }
    }
}
