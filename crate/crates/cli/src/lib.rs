//! Command line front end and WebSocket service for the haptic labs.

pub mod service;
