//! Experiment harness for the tabular active third-person imitation lab.
