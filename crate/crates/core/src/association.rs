//! Serving sets: which APs serve which users.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::config::AssociationMode;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AssociationKind {
    CellFree,
    UserCentric(usize),
    Mmimo,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AssociationMap {
    pub kind: AssociationKind,
    /// Per user, serving APs in decreasing path gain (ascending index for CF).
    pub serving_aps: Vec<Vec<usize>>,
    /// Per AP, served users in ascending index.
    pub served_users: Vec<Vec<usize>>,
    n_aps: usize,
    serves: Vec<bool>,
}

impl AssociationMap {
    fn from_serving(kind: AssociationKind, n_aps: usize, serving_aps: Vec<Vec<usize>>) -> Self {
        let n_users = serving_aps.len();
        let mut served_users = vec![Vec::new(); n_aps];
        let mut serves = vec![false; n_users * n_aps];
        for (k, aps) in serving_aps.iter().enumerate() {
            for &a in aps {
                served_users[a].push(k);
                serves[k * n_aps + a] = true;
            }
        }
        AssociationMap {
            kind,
            serving_aps,
            served_users,
            n_aps,
            serves,
        }
    }

    pub fn n_users(&self) -> usize {
        self.serving_aps.len()
    }

    pub fn n_aps(&self) -> usize {
        self.n_aps
    }

    /// Whether AP `a` serves user `k`.
    pub fn serves(&self, k: usize, a: usize) -> bool {
        self.serves[k * self.n_aps + a]
    }

    /// Check `k ∈ K_a ⇔ a ∈ A_k` and that every user is served.
    pub fn check(&self) -> Result<()> {
        for (k, aps) in self.serving_aps.iter().enumerate() {
            if aps.is_empty() {
                return Err(Error::Association(format!("user {k} has no serving AP")));
            }
            for &a in aps {
                if !self.served_users[a].contains(&k) {
                    return Err(Error::Association(format!("AP {a} serves user {k} one way only")));
                }
            }
        }
        for (a, users) in self.served_users.iter().enumerate() {
            for &k in users {
                if !self.serving_aps[k].contains(&a) {
                    return Err(Error::Association(format!("user {k} lists AP {a} one way only")));
                }
            }
        }
        Ok(())
    }

    /// Keep only the listed users, renumbered in the given order.
    pub fn select_users(&self, users: &[usize]) -> AssociationMap {
        let serving = users.iter().map(|&k| self.serving_aps[k].clone()).collect();
        AssociationMap::from_serving(self.kind, self.n_aps, serving)
    }
}

/// Every AP serves every user.
pub fn associate_cf(n_aps: usize, n_users: usize) -> AssociationMap {
    let serving = vec![(0..n_aps).collect(); n_users];
    AssociationMap::from_serving(AssociationKind::CellFree, n_aps, serving)
}

/// Each user picks its `target` APs with the largest path gain; ties go to the lower AP index.
pub fn associate_uc(beta: &DMatrix<f64>, target: usize) -> Result<AssociationMap> {
    let n_aps = beta.ncols();
    if target == 0 || target > n_aps {
        return Err(Error::config(
            "association.serving_aps",
            format!("must lie in 1..={n_aps}, got {target}"),
        ));
    }
    Ok(AssociationMap::from_serving(
        AssociationKind::UserCentric(target),
        n_aps,
        top_k(beta, target),
    ))
}

fn top_k(beta: &DMatrix<f64>, target: usize) -> Vec<Vec<usize>> {
    (0..beta.nrows())
        .map(|k| {
            let mut idx: Vec<usize> = (0..beta.ncols()).collect();
            // stable sort keeps ascending AP index among equal gains
            idx.sort_by(|&x, &y| beta[(k, y)].total_cmp(&beta[(k, x)]));
            idx.truncate(target);
            idx
        })
        .collect()
}

/// Build the serving sets for the configured mode.
pub fn associate(mode: AssociationMode, beta: &DMatrix<f64>) -> Result<AssociationMap> {
    let map = match mode {
        AssociationMode::Cf => associate_cf(beta.ncols(), beta.nrows()),
        AssociationMode::Uc { serving_aps } => associate_uc(beta, serving_aps)?,
        AssociationMode::Mmimo => {
            AssociationMap::from_serving(AssociationKind::Mmimo, beta.ncols(), top_k(beta, 1))
        }
    };
    map.check()?;
    Ok(map)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn cf_is_full_bipartite() {
        let m = associate_cf(2, 3);
        assert!(m.served_users.iter().all(|u| u.len() == 3));
        m.check().unwrap();
        let beta = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let uc = associate_uc(&beta, 2).unwrap();
        for k in 0..3 {
            let mut s = uc.serving_aps[k].clone();
            s.sort();
            assert_eq!(s, m.serving_aps[k]);
        }
    }

    #[test]
    fn uc_examples() {
        let beta = DMatrix::from_row_slice(2, 4, &[0.1, 0.9, 0.3, 0.9, 4.0, 3.0, 2.0, 1.0]);
        let m = associate_uc(&beta, 1).unwrap();
        assert_eq!(m.serving_aps, vec![vec![1], vec![0]]);
        let m = associate_uc(&beta, 3).unwrap();
        assert_eq!(m.serving_aps[1], vec![0, 1, 2]);
        assert_eq!(m.serving_aps[0], vec![1, 3, 2]);
        assert!(associate_uc(&beta, 0).unwrap_err().is_config());
        assert!(associate_uc(&beta, 5).unwrap_err().is_config());
    }

    proptest! {
        #[test]
        fn uc_agrees_with_brute_force(vals in proptest::collection::vec(0.0..1.0f64, 60), target in 1usize..=6) {
            let beta = DMatrix::from_row_slice(10, 6, &vals);
            let m = associate_uc(&beta, target).unwrap();
            m.check().unwrap();
            for k in 0..10 {
                let s = &m.serving_aps[k];
                prop_assert_eq!(s.len(), target);
                // brute force: an AP is in the set iff fewer than `target` APs beat it
                for a in 0..6 {
                    let better = (0..6)
                        .filter(|&b| beta[(k, b)] > beta[(k, a)] || (beta[(k, b)] == beta[(k, a)] && b < a))
                        .count();
                    prop_assert_eq!(s.contains(&a), better < target);
                }
                let min_in = s.iter().map(|&a| beta[(k, a)]).fold(f64::INFINITY, f64::min);
                let max_out = (0..6).filter(|a| !s.contains(a)).map(|a| beta[(k, a)]).fold(0.0, f64::max);
                prop_assert!(min_in >= max_out);
            }
        }
    }
}
