pub mod barrier_free;
pub mod bench;
pub mod broadcast;
pub mod check;
pub mod node;
pub mod object;
pub mod paxos;
pub mod protocol;
pub mod replication;
pub mod runner;
pub mod scenario;
pub mod sim;
pub mod tau;
pub mod trace;
pub mod value;
