//! Multi-transfer freight dispatch toolkit.
//!
//! * [`world`]: delivery network, scenario generation
//! * [`env`]: epoch-based dispatch environment, rewards, idle elimination
//! * [`matcher`]: greedy multi-transfer request matching
//! * [`qmix`]: recurrent agents, monotone mixing, training loop
//! * [`milp`]: exact routing model, branch and bound, LP export
//! * [`hybrid`]: learned dispatch plus exact rescue of leftovers
//! * [`io`]: CSV tables shared by the command line and bindings

pub mod env;
pub mod error;
pub mod hybrid;
pub mod io;
pub mod matcher;
pub mod milp;
pub mod qmix;
pub mod rng;
pub mod world;

pub use error::{Error, Result};
