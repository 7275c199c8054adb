use rand::Rng;

/// Continuous-force cart-pole with the classic-control constants and Euler
/// integration. State is `[x, x_dot, angle, angle_dot]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CartPole {
    pub gravity: f64,
    pub cart_mass: f64,
    pub pole_mass: f64,
    /// Half the pole length.
    pub half_length: f64,
    pub tau: f64,
    pub force_mag: f64,
    pub x_threshold: f64,
    pub angle_threshold: f64,
    /// Each state coordinate is reset uniformly in `[-w, w]`.
    pub init_half_width: f64,
}

impl Default for CartPole {
    fn default() -> Self {
        CartPole {
            gravity: 9.8,
            cart_mass: 1.0,
            pole_mass: 0.1,
            half_length: 0.5,
            tau: 0.02,
            force_mag: 10.0,
            x_threshold: 2.4,
            angle_threshold: 12.0 * std::f64::consts::PI / 180.0,
            init_half_width: 0.05,
        }
    }
}

impl CartPole {
    pub fn reset<R: Rng + ?Sized>(&self, rng: &mut R) -> [f64; 4] {
        let w = self.init_half_width;
        if w == 0.0 {
            return [0.0; 4];
        }
        std::array::from_fn(|_| rng.random_range(-w..w))
    }

    /// One Euler step under `force` (clipped to `±force_mag`). Returns the
    /// next state and whether the pole or cart left the allowed region.
    pub fn step(&self, state: &[f64; 4], force: f64) -> ([f64; 4], bool) {
        let force = force.clamp(-self.force_mag, self.force_mag);
        let [x, x_dot, angle, angle_dot] = *state;
        let total_mass = self.cart_mass + self.pole_mass;
        let pole_mass_length = self.pole_mass * self.half_length;
        let (sin, cos) = angle.sin_cos();

        let temp = (force + pole_mass_length * angle_dot * angle_dot * sin) / total_mass;
        let angle_acc = (self.gravity * sin - cos * temp)
            / (self.half_length * (4.0 / 3.0 - self.pole_mass * cos * cos / total_mass));
        let x_acc = temp - pole_mass_length * angle_acc * cos / total_mass;

        let next = [
            x + self.tau * x_dot,
            x_dot + self.tau * x_acc,
            angle + self.tau * angle_dot,
            angle_dot + self.tau * angle_acc,
        ];
        let terminated = next[0].abs() > self.x_threshold || next[2].abs() > self.angle_threshold;
        (next, terminated)
    }
}
