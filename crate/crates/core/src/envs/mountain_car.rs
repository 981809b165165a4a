use super::{Env, GridIndex, StepOutcome};
use crate::srm::Domain;

/// Mountain car with the position axis shifted so the valley bottom is at 0
/// and peaks rise on both sides.
#[derive(Debug, Clone, PartialEq)]
pub struct MountainCarParams {
    pub force: f64,
    pub gravity: f64,
    pub max_speed: f64,
    pub max_position: f64,
    /// Physics ticks per agent action.
    pub ticks_per_action: usize,
    pub start_position: f64,
}

impl Default for MountainCarParams {
    fn default() -> Self {
        MountainCarParams {
            force: 0.001,
            gravity: 0.0025,
            max_speed: 0.07,
            max_position: 1.2,
            ticks_per_action: 4,
            start_position: 0.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MountainCar {
    params: MountainCarParams,
    position: f64,
    velocity: f64,
    ticks: u64,
    variables: Vec<String>,
}

impl MountainCar {
    pub fn new(params: MountainCarParams) -> MountainCar {
        MountainCar {
            position: params.start_position,
            velocity: 0.0,
            params,
            ticks: 0,
            variables: vec!["position".into(), "velocity".into()],
        }
    }

    /// Internal physics ticks since construction.
    pub fn ticks(&self) -> u64 {
        self.ticks
    }

    pub fn set_state(&mut self, position: f64, velocity: f64) {
        self.position = position;
        self.velocity = velocity;
    }

    /// One physics tick. The classic update `v += (a-1) F - g cos(3x)` in
    /// shifted coordinates `p = x + pi/6` reads `v += (a-1) F - g sin(3p)`.
    fn tick(&mut self, action: usize) {
        let p = &self.params;
        self.velocity += (action as f64 - 1.0) * p.force - p.gravity * (3.0 * self.position).sin();
        self.velocity = self.velocity.clamp(-p.max_speed, p.max_speed);
        self.position += self.velocity;
        if self.position <= -p.max_position || self.position >= p.max_position {
            self.position = self.position.clamp(-p.max_position, p.max_position);
            self.velocity = 0.0;
        }
        self.ticks += 1;
    }
}

impl Env for MountainCar {
    fn name(&self) -> &str {
        "mountain-car"
    }

    fn variables(&self) -> &[String] {
        &self.variables
    }

    /// Push left, no-op, push right.
    fn action_count(&self) -> usize {
        3
    }

    fn reset(&mut self) -> Vec<f64> {
        self.position = self.params.start_position;
        self.velocity = 0.0;
        vec![self.position, self.velocity]
    }

    fn step(&mut self, action: usize) -> StepOutcome {
        for _ in 0..self.params.ticks_per_action {
            self.tick(action);
        }
        StepOutcome {
            state: vec![self.position, self.velocity],
            signal: 0.0,
            terminal: false,
        }
    }

    fn domain(&self) -> Domain {
        let p = &self.params;
        Domain::boxed(
            &[
                ("position", -p.max_position, p.max_position),
                ("velocity", -p.max_speed, p.max_speed),
            ],
            false,
        )
    }

    fn bounds(&self) -> Vec<(f64, f64)> {
        let p = &self.params;
        vec![
            (-p.max_position, p.max_position),
            (-p.max_speed, p.max_speed),
        ]
    }

    fn grid(&self) -> Option<GridIndex> {
        None
    }

    fn fresh(&self, _seed: u64) -> Box<dyn Env> {
        Box::new(MountainCar::new(self.params.clone()))
    }
}
