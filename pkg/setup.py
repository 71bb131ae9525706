from setuptools import setup

setup(
    use_scm_version={"write_to": "dpmsim/__version__.py"},
    entry_points={"console_scripts": ["dpmsim = dpmsim.cmdline:cli"]},
)
