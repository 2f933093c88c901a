//! Behavior planning and execution for a simulated mobile manipulator.
//!
//! A language-model planner turns an instruction into an XML behavior tree
//! ([`bt::TaskGraph`]) grounded in a library of robot behaviors
//! ([`registry::BehaviorLibrary`]). The [`executor`] ticks that tree against
//! a seeded [`sim::WorldState`], where fused perception conditions detect
//! failed grasps and `Retry` nodes recover from them. [`bench`] measures
//! planning and execution success over many seeded trials.

pub mod bench;
pub mod bt;
pub mod config;
pub mod executor;
pub mod planner;
pub mod registry;
pub mod sim;
