//! Miniature university information system.
//!
//! Students enroll in subjects, register for exam terms and read their
//! grades; lecturers create exam terms and grade participants. The crate
//! is the reference system under test of the testbed: its source carries
//! `@anchor` seams for defect seeding, and [`activation`] records when a
//! seeded defect's code runs.

pub mod activation;
pub mod activity;
pub mod core;
pub mod logfmt;
pub mod web;
