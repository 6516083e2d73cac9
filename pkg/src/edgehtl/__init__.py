"""Energy/accuracy simulator for HTL-based analytics at the network edge."""
