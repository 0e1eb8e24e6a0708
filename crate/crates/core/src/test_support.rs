//! Small random models shared by unit tests.

use std::f64::consts::TAU;

use rand::Rng;

use crate::association::AssociationMap;
use crate::channel::{LargeScaleState, LinkStats};
use crate::config::LosPhasePolicy;
use crate::estimation::{build_estimation, PilotBook};
use crate::linalg::{CVec, C64, ONE};
use crate::spectral_efficiency::{Frame, SeModel};

pub struct Fixture {
    pub n_users: usize,
    pub n_aps: usize,
    pub n_antennas: usize,
    pub pilots: Vec<usize>,
    pub tau_p: usize,
    /// Largest Rice factor drawn; 0 gives Rayleigh links.
    pub max_rice: f64,
    pub sigma_z2: f64,
}

impl Fixture {
    pub fn new(n_users: usize, n_aps: usize, pilots: Vec<usize>, tau_p: usize) -> Self {
        Fixture {
            n_users,
            n_aps,
            n_antennas: 2,
            pilots,
            tau_p,
            max_rice: 4.0,
            sigma_z2: 0.1,
        }
    }

    pub fn links<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<LinkStats> {
        let n = self.n_antennas;
        (0..self.n_users * self.n_aps)
            .map(|_| {
                let k = rng.random::<f64>() * self.max_rice;
                LinkStats {
                    beta: 0.2 + rng.random::<f64>(),
                    rice_k: k,
                    p_los: k / (k + 1.0),
                    steering: CVec::from_fn(n, |q, _| {
                        if q == 0 {
                            ONE
                        } else {
                            C64::from_polar(1.0, rng.random::<f64>() * TAU)
                        }
                    }),
                    los_phase: 0.0,
                    shadow_db: 0.0,
                    los: false,
                }
            })
            .collect()
    }

    pub fn build_with_links(&self, links: Vec<LinkStats>, assoc: AssociationMap) -> SeModel {
        let ls = LargeScaleState {
            n_users: self.n_users,
            n_aps: self.n_aps,
            n_antennas: self.n_antennas,
            links,
        };
        let book = PilotBook::with_assignment(self.tau_p, self.pilots.clone()).unwrap();
        let est = build_estimation(&ls, &book, &vec![1.0; self.n_users], 0.2, false).unwrap();
        let rest = (100 - self.tau_p) as f64 / 2.0;
        let frame = Frame {
            tau_c: 100.0,
            tau_p: self.tau_p as f64,
            tau_d: rest,
            tau_u: rest,
        };
        SeModel::new(ls, est, book, assoc, self.sigma_z2, frame, 1e6, LosPhasePolicy::PerDraw).unwrap()
    }

    pub fn build<R: Rng + ?Sized>(&self, assoc: AssociationMap, rng: &mut R) -> SeModel {
        let links = self.links(rng);
        self.build_with_links(links, assoc)
    }
}
