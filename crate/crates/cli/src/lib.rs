//! Standard-library companion to `markov-oftrl`: JSON game files, the
//! experiment runner and its CSV output, a brute-force reference evaluator
//! and the acceptance checks.

pub mod acceptance;
pub mod gamefile;
pub mod oracle;
pub mod run;
