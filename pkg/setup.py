from setuptools import setup, find_packages

setup(
    name="pdc-g2",
    version="0.1.0",
    packages=find_packages(where="src"),
    package_dir={"": "src"},
    install_requires=[
        "torch",
        "numpy",
        "scipy",
        "pandas",
        "tqdm",
        "pydantic>=2",
    ],
    extras_require={
        "test": ["pytest", "hypothesis"],
    },
    entry_points={
        "console_scripts": ["pdc-g2=pdc_g2.cli:main"],
    },
    python_requires=">=3.9",
)
