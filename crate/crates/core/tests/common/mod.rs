pub mod graph_oracle;
