use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::env::Encoder;
use crate::rng::Rng;

/// Sizes that fix every parameter shape.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dims {
    pub obs_len: usize,
    pub num_actions: usize,
    pub num_agents: usize,
    pub state_len: usize,
    pub hidden: usize,
    pub mix_hidden: usize,
}

impl Dims {
    pub fn from_encoder(enc: &Encoder, hidden: usize) -> Self {
        Self {
            obs_len: enc.vector_len(),
            num_actions: enc.num_actions(),
            num_agents: enc.num_trucks,
            state_len: enc.vector_len(),
            hidden,
            mix_hidden: hidden,
        }
    }

    /// Observation, last-action one-hot and agent-id one-hot.
    pub fn agent_input_len(&self) -> usize {
        self.obs_len + self.num_actions + self.num_agents
    }
}

macro_rules! param_group {
    ($name:ident { $($field:ident),* $(,)? }) => {
        #[derive(Clone, Debug, PartialEq)]
        pub struct $name {
            $(pub $field: Array2<f64>,)*
        }

        impl $name {
            pub const NAMES: &'static [&'static str] = &[$(stringify!($field)),*];

            pub fn tensors(&self) -> Vec<&Array2<f64>> {
                vec![$(&self.$field),*]
            }

            pub fn tensors_mut(&mut self) -> Vec<&mut Array2<f64>> {
                vec![$(&mut self.$field),*]
            }

            pub fn zeros_like(&self) -> Self {
                Self { $($field: Array2::zeros(self.$field.raw_dim()),)* }
            }
        }
    };
}

// Weights are stored `(inputs, outputs)` so a batch `X` maps to `X W + b`.
param_group!(AgentParams {
    w_in, b_in,
    w_z, u_z, b_z,
    w_r, u_r, b_r,
    w_h, u_h, b_h,
    w_out, b_out,
});

param_group!(MixerParams {
    hyper_w1, hyper_w1_b,
    hyper_b1, hyper_b1_b,
    hyper_w2, hyper_w2_b,
    hyper_v1, hyper_v1_b,
    hyper_v2, hyper_v2_b,
});

#[derive(Clone, Debug, PartialEq)]
pub struct QmixParams {
    pub dims: Dims,
    pub agent: AgentParams,
    pub mixer: MixerParams,
}

fn uniform(rows: usize, cols: usize, fan_in: usize, rng: &mut Rng) -> Array2<f64> {
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    Array2::from_shape_fn((rows, cols), |_| (2.0 * rng.next_f64() - 1.0) * bound)
}

impl QmixParams {
    /// Uniform initialisation in `±1/sqrt(fan_in)` for weights and biases.
    pub fn init(dims: Dims, rng: &mut Rng) -> Self {
        let (d, h, a) = (dims.agent_input_len(), dims.hidden, dims.num_actions);
        let (s, e, n) = (dims.state_len, dims.mix_hidden, dims.num_agents);
        let mut u = |r, c, f| uniform(r, c, f, rng);
        let agent = AgentParams {
            w_in: u(d, h, d),
            b_in: u(1, h, d),
            w_z: u(h, h, h),
            u_z: u(h, h, h),
            b_z: u(1, h, h),
            w_r: u(h, h, h),
            u_r: u(h, h, h),
            b_r: u(1, h, h),
            w_h: u(h, h, h),
            u_h: u(h, h, h),
            b_h: u(1, h, h),
            w_out: u(h, a, h),
            b_out: u(1, a, h),
        };
        let mixer = MixerParams {
            hyper_w1: u(s, n * e, s),
            hyper_w1_b: u(1, n * e, s),
            hyper_b1: u(s, e, s),
            hyper_b1_b: u(1, e, s),
            hyper_w2: u(s, e, s),
            hyper_w2_b: u(1, e, s),
            hyper_v1: u(s, e, s),
            hyper_v1_b: u(1, e, s),
            hyper_v2: u(e, 1, e),
            hyper_v2_b: u(1, 1, e),
        };
        Self { dims, agent, mixer }
    }

    pub fn zeros(dims: Dims) -> Self {
        let mut p = Self::init(dims, &mut Rng::new(0));
        p.scale(0.0);
        p
    }

    pub fn zeros_like(&self) -> Self {
        Self { dims: self.dims, agent: self.agent.zeros_like(), mixer: self.mixer.zeros_like() }
    }

    /// `(qualified name, tensor)` in a fixed order.
    pub fn named(&self) -> Vec<(String, &Array2<f64>)> {
        let a = AgentParams::NAMES.iter().map(|n| format!("agent.{n}")).zip(self.agent.tensors());
        let m = MixerParams::NAMES.iter().map(|n| format!("mixer.{n}")).zip(self.mixer.tensors());
        a.chain(m).collect()
    }

    pub fn tensors(&self) -> Vec<&Array2<f64>> {
        let mut v = self.agent.tensors();
        v.extend(self.mixer.tensors());
        v
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Array2<f64>> {
        let mut v = self.agent.tensors_mut();
        v.extend(self.mixer.tensors_mut());
        v
    }

    pub fn num_values(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.tensors().iter().flat_map(|t| t.iter()).map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn scale(&mut self, c: f64) {
        for t in self.tensors_mut() {
            t.mapv_inplace(|x| x * c);
        }
    }

    pub fn add_assign(&mut self, other: &Self) {
        for (t, o) in self.tensors_mut().into_iter().zip(other.tensors()) {
            *t += o;
        }
    }
}
