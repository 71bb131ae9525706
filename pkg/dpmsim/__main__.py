from dpmsim.cmdline import cli

cli(prog_name="dpmsim")
