from setuptools import setup

with open("README.md", "r") as fh:
    long_description = fh.read()

setup(name="frprune",
      version="0.1.0",
      description="Gradual structured channel pruning during training, guided by feature-relevance scores",
      long_description=long_description,
      long_description_content_type="text/markdown",
      license="MIT",
      packages=["frprune", "frprune.tensor", "frprune.model", "frprune.lrp", "frprune.scoring",
                "frprune.scoring.baseline", "frprune.training", "frprune.metrics", "frprune.data",
                "frprune.util", "frprune.cli"],
      python_requires=">=3.8",
      install_requires=[
            'numpy>=1.20',
            'pandas>=1.5',
            'tqdm',
      ],
      tests_require=[
            'pytest',
            'pandas'
      ],
      entry_points={
            "console_scripts": ["frprune = frprune.cli.main:main"],
      },
      zip_safe=False)
