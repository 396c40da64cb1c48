# Chess rules, encoding, the network and pure metrics; no file or process access
