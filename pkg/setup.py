from setuptools import find_packages, setup

from d2d_sim import __version__

with open("requirements.txt") as f:
    requirements = [line.strip() for line in f if line.strip() and not line.startswith("pytest")]

setup(
    name="d2dsim",
    version=__version__,
    description="Trace-driven simulator for device-to-device replication of social content",
    packages=find_packages(include=["d2d_sim", "d2d_sim.*", "config", "utils"]),
    package_data={"config": ["defaults/*.yaml", "scenarios/*.yaml"]},
    python_requires=">=3.9",
    install_requires=requirements,
    extras_require={"test": ["pytest>=7.3.1"]},
    entry_points={"console_scripts": ["d2dsim=d2d_sim.cli:main"]},
)
