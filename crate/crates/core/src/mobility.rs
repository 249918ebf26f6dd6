//! Random waypoint mobility.
//!
//! Trajectories are generated up front for the whole run from per-node random
//! streams, so `position_at` can answer for any time without mutating state.

use std::collections::BTreeMap;

use rand::RngExt;

use crate::error::SimError;
use crate::ids::NodeId;
use crate::rng::{rng_stream, DeterministicGenerator};
use crate::time::{SimDuration, SimTime, TICKS_PER_SECOND};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Terrain {
    pub width: f64,
    pub height: f64,
}

impl Terrain {
    pub fn contains(&self, p: Position) -> bool {
        (0.0..=self.width).contains(&p.x) && (0.0..=self.height).contains(&p.y)
    }

    fn clamp(&self, p: Position) -> Position {
        Position {
            x: p.x.clamp(0.0, self.width),
            y: p.y.clamp(0.0, self.height),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Position {
    pub x: f64,
    pub y: f64,
}

impl Position {
    pub fn new(x: f64, y: f64) -> Self {
        Position { x, y }
    }

    pub fn distance_sq(self, other: Position) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        dx * dx + dy * dy
    }

    pub fn distance(self, other: Position) -> f64 {
        self.distance_sq(other).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MobilityParams {
    pub enabled: bool,
    pub v_min: f64,
    pub v_max: f64,
    pub pause: SimDuration,
}

impl Default for MobilityParams {
    fn default() -> Self {
        MobilityParams {
            enabled: true,
            v_min: 1.0,
            v_max: 20.0,
            pause: SimDuration::from_secs(2),
        }
    }
}

/// One straight-line move followed by a pause at `to`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaypointLeg {
    pub from: Position,
    pub to: Position,
    pub depart_at: SimTime,
    pub arrive_at: SimTime,
    /// meters per second
    pub speed: f64,
    pub pause_after: SimDuration,
}

impl WaypointLeg {
    fn position_at(&self, t: SimTime) -> Position {
        if t >= self.arrive_at {
            return self.to;
        }
        if t <= self.depart_at {
            return self.from;
        }
        let frac =
            (t - self.depart_at).as_micros() as f64 / (self.arrive_at - self.depart_at).as_micros() as f64;
        Position {
            x: self.from.x + (self.to.x - self.from.x) * frac,
            y: self.from.y + (self.to.y - self.from.y) * frac,
        }
    }
}

/// Draws the next leg: destination uniform over the terrain, speed uniform
/// over `[v_min, v_max]`. Travel time is rounded up to whole ticks so the
/// realised speed never exceeds the drawn one.
pub fn next_waypoint(
    terrain: Terrain,
    params: &MobilityParams,
    from: Position,
    depart_at: SimTime,
    rng: &mut DeterministicGenerator,
) -> WaypointLeg {
    let to = Position {
        x: rng.random_range(0.0..=terrain.width),
        y: rng.random_range(0.0..=terrain.height),
    };
    let speed = if params.v_min == params.v_max {
        params.v_min
    } else {
        rng.random_range(params.v_min..=params.v_max)
    };
    let travel = (from.distance(to) / speed * TICKS_PER_SECOND as f64).ceil() as u64;
    WaypointLeg {
        from,
        to,
        depart_at,
        arrive_at: depart_at + SimDuration::from_micros(travel),
        speed,
        pause_after: params.pause,
    }
}

/// Initial positions: one uniform draw per node from the `placement` stream,
/// then fixed overrides. Every node consumes its draw even when overridden,
/// so pinning one node never moves the others.
pub fn initial_placement(
    terrain: Terrain,
    node_count: usize,
    fixed: &BTreeMap<NodeId, Position>,
    seed: u64,
) -> Vec<Position> {
    let mut rng = rng_stream("placement", seed);
    (0..node_count)
        .map(|i| {
            let drawn = Position {
                x: rng.random_range(0.0..=terrain.width),
                y: rng.random_range(0.0..=terrain.height),
            };
            fixed.get(&NodeId(i as u32)).copied().unwrap_or(drawn)
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct Mobility {
    terrain: Terrain,
    range: f64,
    initial: Vec<Position>,
    legs: Vec<Vec<WaypointLeg>>,
}

impl Mobility {
    /// Static nodes at the given positions.
    pub fn fixed(terrain: Terrain, range: f64, initial: Vec<Position>) -> Self {
        let legs = vec![Vec::new(); initial.len()];
        Mobility {
            terrain,
            range,
            initial,
            legs,
        }
    }

    /// Generates every node's legs from its own `mobility/<id>` stream until
    /// the next departure would fall at or after `limit`.
    pub fn generate(
        terrain: Terrain,
        range: f64,
        params: &MobilityParams,
        initial: Vec<Position>,
        seed: u64,
        limit: SimTime,
    ) -> Self {
        if !params.enabled {
            return Mobility::fixed(terrain, range, initial);
        }
        let legs = initial
            .iter()
            .enumerate()
            .map(|(i, &start)| {
                let mut rng = rng_stream(&format!("mobility/{i}"), seed);
                let mut legs = Vec::new();
                let mut at = start;
                let mut depart = SimTime::ZERO;
                while depart < limit {
                    let leg = next_waypoint(terrain, params, at, depart, &mut rng);
                    at = leg.to;
                    depart = leg.arrive_at + leg.pause_after;
                    legs.push(leg);
                }
                legs
            })
            .collect();
        Mobility {
            terrain,
            range,
            initial,
            legs,
        }
    }

    pub fn node_count(&self) -> usize {
        self.initial.len()
    }

    pub fn range(&self) -> f64 {
        self.range
    }

    pub fn terrain(&self) -> Terrain {
        self.terrain
    }

    pub fn legs(&self, node: NodeId) -> Result<&[WaypointLeg], SimError> {
        self.legs
            .get(node.index())
            .map(Vec::as_slice)
            .ok_or(SimError::UnknownNode(node))
    }

    pub fn position_at(&self, node: NodeId, t: SimTime) -> Result<Position, SimError> {
        let legs = self.legs(node)?;
        let current = legs.partition_point(|leg| leg.depart_at <= t);
        let pos = match current {
            0 => self.initial[node.index()],
            n => legs[n - 1].position_at(t),
        };
        Ok(self.terrain.clamp(pos))
    }

    /// Inclusive range test: a node exactly `range` meters away is reachable.
    pub fn in_range(&self, a: NodeId, b: NodeId, t: SimTime) -> Result<bool, SimError> {
        let pa = self.position_at(a, t)?;
        let pb = self.position_at(b, t)?;
        Ok(pa.distance_sq(pb) <= self.range * self.range)
    }

    /// Every other node within range of `sender` at `t`, in id order.
    pub fn neighbours(&self, sender: NodeId, t: SimTime) -> Result<Vec<NodeId>, SimError> {
        let origin = self.position_at(sender, t)?;
        let r2 = self.range * self.range;
        let mut out = Vec::new();
        for i in 0..self.node_count() {
            let other = NodeId(i as u32);
            if other == sender {
                continue;
            }
            if self.position_at(other, t)?.distance_sq(origin) <= r2 {
                out.push(other);
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const DEFAULT_TERRAIN: Terrain = Terrain {
        width: 1286.0,
        height: 850.0,
    };

    fn line(points: &[(f64, f64)]) -> Mobility {
        Mobility::fixed(
            DEFAULT_TERRAIN,
            250.0,
            points.iter().map(|&(x, y)| Position::new(x, y)).collect(),
        )
    }

    #[test]
    fn static_nodes_never_move() {
        let m = line(&[(10.0, 20.0), (400.0, 300.0)]);
        for t in [0, 1_000, 7_654_321, 20_000_000] {
            assert_eq!(
                m.position_at(NodeId(1), SimTime::from_micros(t)).unwrap(),
                Position::new(400.0, 300.0)
            );
        }
    }

    #[test]
    fn linear_interpolation_along_a_leg() {
        let leg = WaypointLeg {
            from: Position::new(0.0, 0.0),
            to: Position::new(100.0, 0.0),
            depart_at: SimTime::ZERO,
            arrive_at: SimTime::from_secs(10),
            speed: 10.0,
            pause_after: SimDuration::from_secs(2),
        };
        assert_eq!(leg.position_at(SimTime::from_secs(5)), Position::new(50.0, 0.0));
        assert_eq!(leg.position_at(SimTime::from_secs(11)), Position::new(100.0, 0.0));
    }

    #[test]
    fn range_boundary_is_inclusive() {
        let m = line(&[(0.0, 0.0), (249.999, 0.0), (250.0, 0.0), (250.001, 0.0)]);
        let t = SimTime::ZERO;
        assert!(m.in_range(NodeId(0), NodeId(1), t).unwrap());
        assert!(m.in_range(NodeId(0), NodeId(2), t).unwrap());
        assert!(!m.in_range(NodeId(0), NodeId(3), t).unwrap());
    }

    #[test]
    fn terrain_corners_are_out_of_range() {
        let m = line(&[(0.0, 0.0), (1286.0, 850.0)]);
        let d = m
            .position_at(NodeId(0), SimTime::ZERO)
            .unwrap()
            .distance(m.position_at(NodeId(1), SimTime::ZERO).unwrap());
        assert!((d - 1286f64.hypot(850.0)).abs() < 1e-9, "{d}");
        assert!((d - 1541.6).abs() < 0.1);
        assert!(!m.in_range(NodeId(0), NodeId(1), SimTime::ZERO).unwrap());
    }

    #[test]
    fn unknown_node_is_an_error() {
        let m = line(&[(0.0, 0.0)]);
        assert_eq!(
            m.position_at(NodeId(5), SimTime::ZERO),
            Err(SimError::UnknownNode(NodeId(5)))
        );
    }

    #[test]
    fn waypoints_stay_inside_terrain() {
        let params = MobilityParams::default();
        let mut rng = rng_stream("mobility/0", 7);
        let mut at = Position::new(643.0, 425.0);
        for _ in 0..10_000 {
            let leg = next_waypoint(DEFAULT_TERRAIN, &params, at, SimTime::ZERO, &mut rng);
            assert!(DEFAULT_TERRAIN.contains(leg.to));
            at = leg.to;
        }
    }

    #[test]
    fn degenerate_speed_interval() {
        let params = MobilityParams {
            v_min: 5.0,
            v_max: 5.0,
            ..MobilityParams::default()
        };
        let mut rng = rng_stream("mobility/0", 1);
        for _ in 0..100 {
            let leg = next_waypoint(
                DEFAULT_TERRAIN,
                &params,
                Position::new(0.0, 0.0),
                SimTime::ZERO,
                &mut rng,
            );
            assert_eq!(leg.speed, 5.0);
        }
    }

    #[test]
    fn destination_x_mean_matches_uniform() {
        // Uniform on [0, 1286]: mean 643, sd 1286/sqrt(12). Standard error over
        // n draws is sd/sqrt(n); accept within three standard errors.
        let n = 10_000;
        let params = MobilityParams::default();
        let mut rng = rng_stream("mobility/3", 42);
        let sum: f64 = (0..n)
            .map(|_| {
                next_waypoint(
                    DEFAULT_TERRAIN,
                    &params,
                    Position::new(0.0, 0.0),
                    SimTime::ZERO,
                    &mut rng,
                )
                .to
                .x
            })
            .sum();
        let mean = sum / n as f64;
        let se = 1286.0 / 12f64.sqrt() / (n as f64).sqrt();
        assert!((mean - 643.0).abs() <= 3.0 * se, "mean {mean}, 3se {}", 3.0 * se);
    }

    #[test]
    fn fixed_override_does_not_shift_other_nodes() {
        let free = initial_placement(DEFAULT_TERRAIN, 5, &BTreeMap::new(), 42);
        let mut fixed = BTreeMap::new();
        fixed.insert(NodeId(2), Position::new(1.0, 1.0));
        let pinned = initial_placement(DEFAULT_TERRAIN, 5, &fixed, 42);
        assert_eq!(pinned[2], Position::new(1.0, 1.0));
        for i in [0, 1, 3, 4] {
            assert_eq!(free[i], pinned[i]);
        }
    }
}
