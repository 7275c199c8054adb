use rand::Rng;

/// Continuous mountain car. State is `[position, velocity]`.
///
/// The raw signal (goal bonus minus `0.1·a²`) lies in `[-0.1, goal_bonus]`
/// and is mapped affinely onto `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MountainCar {
    pub min_position: f64,
    pub max_position: f64,
    pub max_speed: f64,
    pub goal_position: f64,
    pub power: f64,
    pub gravity: f64,
    pub goal_bonus: f64,
    pub init_low: f64,
    pub init_high: f64,
}

impl Default for MountainCar {
    fn default() -> Self {
        MountainCar {
            min_position: -1.2,
            max_position: 0.6,
            max_speed: 0.07,
            goal_position: 0.45,
            power: 0.0015,
            gravity: 0.0025,
            goal_bonus: 100.0,
            init_low: -0.6,
            init_high: -0.4,
        }
    }
}

const ACTION_COST: f64 = 0.1;

impl MountainCar {
    pub fn reset<R: Rng + ?Sized>(&self, rng: &mut R) -> [f64; 2] {
        [rng.random_range(self.init_low..self.init_high), 0.0]
    }

    /// Affine map of the raw reward onto `[0, 1]`.
    pub fn normalize_reward(&self, raw: f64) -> f64 {
        (raw + ACTION_COST) / (self.goal_bonus + ACTION_COST)
    }

    pub fn step(&self, state: &[f64; 2], action: f64) -> ([f64; 2], f64, bool) {
        let force = action.clamp(-1.0, 1.0);
        let [mut position, mut velocity] = *state;
        velocity += force * self.power - self.gravity * (3.0 * position).cos();
        velocity = velocity.clamp(-self.max_speed, self.max_speed);
        position += velocity;
        position = position.clamp(self.min_position, self.max_position);
        if position == self.min_position && velocity < 0.0 {
            velocity = 0.0;
        }
        let done = position >= self.goal_position && velocity >= 0.0;
        let raw = if done { self.goal_bonus } else { 0.0 } - ACTION_COST * force * force;
        ([position, velocity], self.normalize_reward(raw), done)
    }
}
