"""Strategic aggregator bidding in coupled TSO-DSO energy and services markets."""
