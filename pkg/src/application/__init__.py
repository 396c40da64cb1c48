# Services that wire the chess core to files, engines and reports
