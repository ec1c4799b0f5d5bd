//! Tasks bundled with the crate, embedded at build time.

use crate::error::Result;
use crate::logic::{parse_task, TaskSpec};

macro_rules! bundled {
    ($($name:literal => $file:literal),* $(,)?) => {
        /// `(name, source text)` for every bundled task.
        pub const TASKS: &[(&str, &str)] = &[$(($name, include_str!(concat!("../tasks/", $file)))),*];
    };
}

bundled! {
    "mnist_add_toy" => "mnist_add_toy.task",
    "mnist_add_extended" => "mnist_add_extended.task",
    "mnist_sum_product" => "mnist_sum_product.task",
    "mnist_sum_greater" => "mnist_sum_greater.task",
    "xor" => "xor.task",
    "bit_sum" => "bit_sum.task",
    "boia" => "boia.json",
    "go_stop" => "go_stop.task",
    "bdd_like" => "bdd_like.task",
    "bijection4" => "bijection4.task",
    "and2" => "and2.task",
    "or3" => "or3.task",
    "parity3" => "parity3.task",
    "majority3" => "majority3.task",
    "sum3" => "sum3.task",
    "difference3" => "difference3.task",
    "product3" => "product3.task",
    "less_than3" => "less_than3.task",
    "implication" => "implication.task",
    "partial_support" => "partial_support.task",
    "weighted_xor" => "weighted_xor.task",
    "sum_mod3" => "sum_mod3.task",
}

pub fn source(name: &str) -> Option<&'static str> {
    TASKS.iter().find(|(n, _)| *n == name).map(|(_, s)| *s)
}

pub fn load(name: &str) -> Option<Result<TaskSpec>> {
    source(name).map(parse_task)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::logic::build_beta_star;

    #[test]
    fn every_task_compiles() {
        assert!(TASKS.len() >= 20);
        for (name, text) in TASKS {
            let t = parse_task(text).unwrap_or_else(|e| panic!("{name}: {e}"));
            build_beta_star(&t).unwrap_or_else(|e| panic!("{name}: {e}"));
        }
        assert!(load("nope").is_none());
    }
}
