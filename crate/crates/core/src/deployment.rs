//! Network topology on a wrapped square.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::config::{AssociationMode, SimConfig, UlaOrientation};
use crate::error::Result;

pub type Point3 = [f64; 3];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Gue,
    Uav,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Gue => "gue",
            Role::Uav => "uav",
        }
    }
}

impl std::fmt::Display for Role {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct User {
    pub position: Point3,
    pub role: Role,
}

/// Positions of every AP antenna and every user for one drop.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NetworkGeometry {
    pub area_side: f64,
    /// Reference (first) antenna of each AP.
    pub ap_positions: Vec<Point3>,
    /// All antenna positions per AP; entry 0 equals the reference position.
    pub ap_antennas: Vec<Vec<Point3>>,
    /// Unit vector along each AP's array.
    pub ula_axes: Vec<Point3>,
    /// GUEs first, then UAVs.
    pub users: Vec<User>,
}

impl NetworkGeometry {
    pub fn n_aps(&self) -> usize {
        self.ap_positions.len()
    }

    pub fn n_users(&self) -> usize {
        self.users.len()
    }

    pub fn roles(&self) -> Vec<Role> {
        self.users.iter().map(|u| u.role).collect()
    }

    /// 3D wrapped distance between user `k` and the reference antenna of AP `a`.
    pub fn distance(&self, k: usize, a: usize) -> f64 {
        wrapped_distance(&self.users[k].position, &self.ap_positions[a], self.area_side)
    }

    pub fn distance_2d(&self, k: usize, a: usize) -> f64 {
        wrapped_distance_2d(&self.users[k].position, &self.ap_positions[a], self.area_side)
    }

    /// The wrapped image of user `k` nearest to AP `a`. Steering vectors are
    /// computed against this image.
    pub fn user_image_near(&self, k: usize, a: usize) -> Point3 {
        let p = self.ap_positions[a];
        let d = wrapped_delta(&p, &self.users[k].position, self.area_side);
        [p[0] + d[0], p[1] + d[1], p[2] + d[2]]
    }
}

fn wrap_component(delta: f64, side: f64) -> f64 {
    if !side.is_finite() {
        return delta;
    }
    let r = delta.rem_euclid(side);
    if r > side / 2.0 {
        r - side
    } else {
        r
    }
}

/// Minimal-image displacement from `p` to `q`: horizontal components wrapped
/// into `[-side/2, side/2]`, vertical untouched.
pub fn wrapped_delta(p: &Point3, q: &Point3, area_side: f64) -> Point3 {
    [
        wrap_component(q[0] - p[0], area_side),
        wrap_component(q[1] - p[1], area_side),
        q[2] - p[2],
    ]
}

pub fn wrapped_distance(p: &Point3, q: &Point3, area_side: f64) -> f64 {
    let d = wrapped_delta(p, q, area_side);
    (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt()
}

/// Horizontal-only wrapped distance.
pub fn wrapped_distance_2d(p: &Point3, q: &Point3, area_side: f64) -> f64 {
    let d = wrapped_delta(p, q, area_side);
    d[0].hypot(d[1])
}

/// Draw APs, GUEs and UAVs for one drop.
pub fn generate_topology<R: Rng + ?Sized>(cfg: &SimConfig, rng: &mut R) -> Result<NetworkGeometry> {
    cfg.validate()?;
    let side = cfg.area_side;
    let ap_positions: Vec<Point3> = if cfg.association == AssociationMode::Mmimo {
        grid_positions(cfg.n_ap, side, cfg.ap_height)
    } else {
        (0..cfg.n_ap)
            .map(|_| [rng.random::<f64>() * side, rng.random::<f64>() * side, cfg.ap_height])
            .collect()
    };
    let spacing = cfg.spacing();
    let mut ula_axes = Vec::with_capacity(cfg.n_ap);
    let mut ap_antennas = Vec::with_capacity(cfg.n_ap);
    for p in &ap_positions {
        let axis = match cfg.ula_orientation {
            UlaOrientation::RandomHorizontal => {
                let phi = rng.random::<f64>() * std::f64::consts::TAU;
                [phi.cos(), phi.sin(), 0.0]
            }
            UlaOrientation::AlongX => [1.0, 0.0, 0.0],
            UlaOrientation::Vertical => [0.0, 0.0, 1.0],
        };
        let ants = (0..cfg.n_ap_antennas)
            .map(|q| {
                let s = q as f64 * spacing;
                [p[0] + s * axis[0], p[1] + s * axis[1], p[2] + s * axis[2]]
            })
            .collect();
        ula_axes.push(axis);
        ap_antennas.push(ants);
    }
    let mut users = Vec::with_capacity(cfg.n_users());
    for _ in 0..cfg.n_gue {
        users.push(User {
            position: [rng.random::<f64>() * side, rng.random::<f64>() * side, cfg.gue_height],
            role: Role::Gue,
        });
    }
    let [h_lo, h_hi] = cfg.uav_height_range;
    for _ in 0..cfg.n_uav {
        let h = h_lo + rng.random::<f64>() * (h_hi - h_lo);
        users.push(User {
            position: [rng.random::<f64>() * side, rng.random::<f64>() * side, h],
            role: Role::Uav,
        });
    }
    Ok(NetworkGeometry {
        area_side: side,
        ap_positions,
        ap_antennas,
        ula_axes,
        users,
    })
}

/// Cell centers of the smallest square grid holding `n` sites, row-major.
fn grid_positions(n: usize, side: f64, height: f64) -> Vec<Point3> {
    let per_row = (n as f64).sqrt().ceil() as usize;
    let cell = side / per_row as f64;
    (0..n)
        .map(|i| {
            let (r, c) = (i / per_row, i % per_row);
            [(c as f64 + 0.5) * cell, (r as f64 + 0.5) * cell, height]
        })
        .collect()
}
