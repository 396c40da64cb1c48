# Files, shards, checkpoints, the UCI engine client, logging and reports
